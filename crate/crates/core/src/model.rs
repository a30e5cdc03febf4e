//! The user-facing binning model: merged bins of kept variables, dropped
//! variables, a scorecard report and a scorer for new rows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{self, BinGrid, Dataset};
use crate::error::{Error, Result};
use crate::glm;
use crate::objective::{sigmoid, Coefficients};
use crate::solver::FitResult;

/// Default absolute tolerance for merging bins and dropping variables.
pub const DEFAULT_MERGE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVariable {
    pub name: String,
    /// Position of the variable in the rows passed to [`BinningModel::score`].
    pub column: usize,
    pub cutpoints: Vec<f64>,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub nbins: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningModel {
    pub intercept: f64,
    pub variables: Vec<ModelVariable>,
    pub dropped: Vec<String>,
    pub provenance: Provenance,
}

/// Kept-variable count and total merged bins of a coefficient vector,
/// using the same rules as [`extract`].
pub fn bin_structure(beta: &Coefficients, tol: f64) -> (usize, usize) {
    beta.groups()
        .filter(|g| !is_dropped(g, tol))
        .fold((0, 0), |(kept, bins), g| (kept + 1, bins + merged_runs(g, tol).len()))
}

fn is_dropped(group: &[f64], tol: f64) -> bool {
    group.iter().all(|b| b.abs() <= tol)
}

/// Half-open index ranges of fine bins that merge.
fn merged_runs(group: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for k in 1..group.len() {
        if (group[k] - group[k - 1]).abs() > tol {
            runs.push((start, k));
            start = k;
        }
    }
    runs.push((start, group.len()));
    runs
}

fn merged_value(coefs: &[f64], counts: &[usize]) -> f64 {
    if coefs.iter().all(|&c| c == coefs[0]) {
        return coefs[0];
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return coefs.iter().sum::<f64>() / coefs.len() as f64;
    }
    coefs
        .iter()
        .zip(counts)
        .map(|(&c, &m)| c * m as f64)
        .sum::<f64>()
        / total as f64
}

/// Turns a fit on the fine grid into merged bins. `counts` holds the training
/// rows of every fine bin, flat in design column order.
pub fn extract(fit: &FitResult, grid: &BinGrid, counts: &[usize], tol: f64) -> Result<BinningModel> {
    let beta = &fit.beta;
    if beta.widths() != grid.bin_counts() {
        return Err(Error::Shape(format!(
            "fit groups {:?} do not match grid {:?}",
            beta.widths(),
            grid.bin_counts()
        )));
    }
    if counts.len() != beta.values().len() {
        return Err(Error::Shape(format!(
            "{} bin counts for {} coefficients",
            counts.len(),
            beta.values().len()
        )));
    }
    let mut variables = Vec::new();
    let mut dropped = Vec::new();
    for (j, group) in beta.groups().enumerate() {
        let name = grid.names()[j].clone();
        if is_dropped(group, tol) {
            dropped.push(name);
            continue;
        }
        let offset = beta.offsets()[j];
        let runs = merged_runs(group, tol);
        let cutpoints = runs[1..].iter().map(|&(s, _)| grid.cuts(j)[s - 1]).collect();
        let coefficients = runs
            .iter()
            .map(|&(s, e)| merged_value(&group[s..e], &counts[offset + s..offset + e]))
            .collect();
        variables.push(ModelVariable {
            name,
            column: j,
            cutpoints,
            coefficients,
        });
    }
    Ok(BinningModel {
        intercept: beta.intercept(),
        variables,
        dropped,
        provenance: Provenance {
            nbins: grid.nbins(),
            lambda1: fit.params.lambda1,
            lambda2: fit.params.lambda2,
            tol,
        },
    })
}

impl BinningModel {
    /// Number of variables a scored row must carry.
    pub fn n_inputs(&self) -> usize {
        self.variables.len() + self.dropped.len()
    }

    pub fn total_bins(&self) -> usize {
        self.variables.iter().map(|v| v.coefficients.len()).sum()
    }

    /// Logit of one row given in the original variable order.
    pub fn logit(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_inputs() {
            return Err(Error::Shape(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.n_inputs()
            )));
        }
        let mut z = self.intercept;
        for var in &self.variables {
            let v = row[var.column];
            if !v.is_finite() {
                return Err(Error::NonFiniteInput(var.name.clone()));
            }
            z += var.coefficients[dataset::assign(&var.cutpoints, v)];
        }
        Ok(z)
    }

    /// Probability of class 1 for one row.
    pub fn score(&self, row: &[f64]) -> Result<f64> {
        self.logit(row).map(sigmoid)
    }

    /// Scores every row of `columns`, which are given for the kept
    /// variables in model order.
    pub fn score_kept_columns(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>> {
        if columns.len() != self.variables.len() {
            return Err(Error::Shape("one column per kept variable expected".into()));
        }
        let n = columns.first().map_or(0, Vec::len);
        (0..n)
            .map(|i| {
                let mut z = self.intercept;
                for (var, col) in self.variables.iter().zip(columns) {
                    let v = col[i];
                    if !v.is_finite() {
                        return Err(Error::NonFiniteInput(var.name.clone()));
                    }
                    z += var.coefficients[dataset::assign(&var.cutpoints, v)];
                }
                Ok(sigmoid(z))
            })
            .collect()
    }

    pub fn score_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.score_kept_columns(&self.kept_columns(data)?)
    }

    fn kept_columns(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        self.variables
            .iter()
            .map(|v| {
                data.names()
                    .iter()
                    .position(|n| *n == v.name)
                    .map(|j| data.column(j).to_vec())
                    .ok_or_else(|| Error::MissingColumn(v.name.clone()))
            })
            .collect()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let model: BinningModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    fn validate(&self) -> Result<()> {
        let p = self.n_inputs();
        for v in &self.variables {
            if v.column >= p {
                return Err(Error::InvalidConfig(format!(
                    "variable '{}' has column {} but the model has {p} inputs",
                    v.name, v.column
                )));
            }
            if v.coefficients.len() != v.cutpoints.len() + 1 {
                return Err(Error::InvalidConfig(format!(
                    "variable '{}' needs one coefficient per bin",
                    v.name
                )));
            }
            if v.cutpoints.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig(format!(
                    "cut points of '{}' are not strictly increasing",
                    v.name
                )));
            }
        }
        Ok(())
    }

    /// Refits the kept variables' merged bins without penalty. A ridge of
    /// `ridge` keeps the one-hot system well posed.
    pub fn refit_merged(&self, data: &Dataset, ridge: f64) -> Result<BinningModel> {
        let columns = self.kept_columns(data)?;
        let widths: Vec<usize> = self.variables.iter().map(|v| v.coefficients.len()).collect();
        let n = data.n_rows();
        let mut rows = glm::SparseRows::new(widths.len() + 1);
        let mut offsets = vec![1usize];
        for w in &widths {
            offsets.push(offsets.last().unwrap() + w);
        }
        let mut entries = Vec::with_capacity(widths.len() + 1);
        for i in 0..n {
            entries.clear();
            entries.push((0, 1.0));
            for (j, (var, col)) in self.variables.iter().zip(&columns).enumerate() {
                entries.push((offsets[j] + dataset::assign(&var.cutpoints, col[i]), 1.0));
            }
            rows.push(&entries);
        }
        let fit = glm::fit_logistic(&rows, *offsets.last().unwrap(), data.target(), ridge)?;
        let mut model = self.clone();
        model.intercept = fit[0];
        for (j, var) in model.variables.iter_mut().enumerate() {
            var.coefficients = fit[offsets[j]..offsets[j + 1]].to_vec();
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorecardRow {
    pub variable: String,
    pub bin_low: f64,
    pub bin_high: f64,
    pub coefficient: f64,
    pub count: usize,
    /// NaN for an empty bin.
    pub event_rate: f64,
    pub woe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorecardTable {
    pub rows: Vec<ScorecardRow>,
}

/// Weight of evidence with 0.5 added to each of the four counts.
pub fn woe(events: usize, nonevents: usize, total_events: usize, total_nonevents: usize) -> f64 {
    let e = (events as f64 + 0.5) / (total_events as f64 + 0.5);
    let ne = (nonevents as f64 + 0.5) / (total_nonevents as f64 + 0.5);
    (e / ne).ln()
}

/// Per merged bin: training count, event rate and WOE.
pub fn scorecard(model: &BinningModel, data: &Dataset) -> Result<ScorecardTable> {
    let columns = model.kept_columns(data)?;
    let target = data.target();
    let total_events = target.iter().filter(|&&y| y == 1).count();
    let total_nonevents = target.len() - total_events;
    let mut rows = Vec::new();
    for (var, col) in model.variables.iter().zip(&columns) {
        let m = var.coefficients.len();
        let mut counts = vec![0usize; m];
        let mut events = vec![0usize; m];
        for (&v, &y) in col.iter().zip(target) {
            let k = dataset::assign(&var.cutpoints, v);
            counts[k] += 1;
            events[k] += usize::from(y);
        }
        for k in 0..m {
            rows.push(ScorecardRow {
                variable: var.name.clone(),
                bin_low: if k == 0 { f64::NEG_INFINITY } else { var.cutpoints[k - 1] },
                bin_high: if k + 1 == m { f64::INFINITY } else { var.cutpoints[k] },
                coefficient: var.coefficients[k],
                count: counts[k],
                event_rate: events[k] as f64 / counts[k] as f64,
                woe: woe(events[k], counts[k] - events[k], total_events, total_nonevents),
            });
        }
    }
    Ok(ScorecardTable { rows })
}

impl ScorecardTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "variable",
            "bin_low",
            "bin_high",
            "coefficient",
            "count",
            "event_rate",
            "woe",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.variable.clone(),
                r.bin_low.to_string(),
                r.bin_high.to_string(),
                r.coefficient.to_string(),
                r.count.to_string(),
                r.event_rate.to_string(),
                r.woe.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Area under the ROC curve as the Mann–Whitney statistic, ties counting 0.5.
pub fn auc(scores: &[f64], target: &[u8]) -> Result<f64> {
    if scores.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} targets",
            scores.len(),
            target.len()
        )));
    }
    let n1 = target.iter().filter(|&&y| y == 1).count();
    let n0 = target.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::DegenerateTarget("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        let positives = order[i..=j].iter().filter(|&&k| target[k] == 1).count();
        rank_sum += mid_rank * positives as f64;
        i = j + 1;
    }
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n1 as f64 * n0 as f64))
}

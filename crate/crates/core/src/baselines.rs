//! Unsupervised baseline binners and a harness that compares them with the
//! penalized model on identical cross-validation folds.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::str::FromStr;

use crate::dataset::{encode, fit_grid, BinGrid, Dataset};
use crate::error::{Error, Result};
use crate::glm::{fit_logistic, SparseRows};
use crate::model::auc;
use crate::par;
use crate::path::{stratified_folds, trace_with_folds, PathConfig, PathResult};

/// Ridge added to every baseline fit; one-hot designs are rank deficient.
pub const BASELINE_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    RawLogistic,
    EqualWidth,
    EqualFrequency,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::RawLogistic => "raw-logistic",
            Method::EqualWidth => "equal-width",
            Method::EqualFrequency => "equal-frequency",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw-logistic" => Ok(Method::RawLogistic),
            "equal-width" => Ok(Method::EqualWidth),
            "equal-frequency" => Ok(Method::EqualFrequency),
            other => Err(Error::InvalidConfig(format!("unknown baseline '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSpec {
    pub method: Method,
    /// Ignored by [`Method::RawLogistic`].
    pub nbins: usize,
}

impl BaselineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.method != Method::RawLogistic && self.nbins < 2 {
            return Err(Error::InvalidConfig(format!(
                "{} needs nbins >= 2, got {}",
                self.method, self.nbins
            )));
        }
        Ok(())
    }
}

/// Cuts at `min + k·(max − min)/nbins`; constant columns get one bin.
pub fn equal_width_grid(data: &Dataset, nbins: usize) -> Result<BinGrid> {
    if nbins < 2 {
        return Err(Error::InvalidConfig(format!("nbins must be >= 2, got {nbins}")));
    }
    let cuts = data
        .columns()
        .iter()
        .map(|col| {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                return Vec::new();
            }
            let mut c: Vec<f64> = (1..nbins)
                .map(|k| lo + k as f64 * (hi - lo) / nbins as f64)
                .collect();
            c.dedup();
            c
        })
        .collect();
    BinGrid::new(nbins, data.names().to_vec(), cuts)
}

/// Settings of the penalized model in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct AbmConfig {
    pub nbins: usize,
    /// `folds` and `seed` are overridden by the comparison's own.
    pub path: PathConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
    pub sd_auc: f64,
    pub kept_vars: usize,
    pub total_bins: usize,
    /// Hash of the fold labelling this method was evaluated on.
    pub fold_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["method", "mean_auc", "sd_auc", "kept_vars", "total_bins"])?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.mean_auc.to_string(),
                r.sd_auc.to_string(),
                r.kept_vars.to_string(),
                r.total_bins.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn row(&self, method: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

pub fn fold_hash(folds: &[usize]) -> u64 {
    let mut h = DefaultHasher::new();
    folds.hash(&mut h);
    h.finish()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// How a baseline turns a row into design entries; column 0 is the intercept.
enum Encoding {
    Binned(BinGrid),
    /// Per-variable centre and scale, estimated on the training rows.
    Raw(Vec<(f64, f64)>),
}

impl Encoding {
    fn ncols(&self, p: usize) -> usize {
        match self {
            Encoding::Binned(g) => 1 + g.total_bins(),
            Encoding::Raw(_) => 1 + p,
        }
    }

    fn rows(&self, data: &Dataset, rows: &[usize]) -> SparseRows {
        let p = data.n_vars();
        let mut out = SparseRows::new(p + 1);
        let mut entries = Vec::with_capacity(p + 1);
        let offsets: Vec<usize> = match self {
            Encoding::Binned(g) => std::iter::once(1)
                .chain((0..p).scan(1, |acc, j| {
                    *acc += g.n_bins(j);
                    Some(*acc)
                }))
                .collect(),
            Encoding::Raw(_) => Vec::new(),
        };
        for &i in rows {
            entries.clear();
            entries.push((0, 1.0));
            for j in 0..p {
                let v = data.column(j)[i];
                entries.push(match self {
                    Encoding::Binned(g) => (offsets[j] + g.assign_bin(j, v), 1.0),
                    Encoding::Raw(scale) => (1 + j, (v - scale[j].0) / scale[j].1),
                });
            }
            out.push(&entries);
        }
        out
    }
}

fn raw_scaling(data: &Dataset, rows: &[usize]) -> Vec<(f64, f64)> {
    data.columns()
        .iter()
        .map(|col| {
            let n = rows.len() as f64;
            let mean = rows.iter().map(|&i| col[i]).sum::<f64>() / n;
            let sd = (rows.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / n).sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect()
}

fn evaluate_baseline(data: &Dataset, spec: &BaselineSpec, folds: &[usize], k: usize) -> Result<ComparisonRow> {
    spec.validate()?;
    let p = data.n_vars();
    let grid = match spec.method {
        Method::RawLogistic => None,
        Method::EqualWidth => Some(equal_width_grid(data, spec.nbins)?),
        Method::EqualFrequency => Some(fit_grid(data, spec.nbins)?),
    };
    let target = data.target();
    let mut aucs = Vec::with_capacity(k);
    for f in 0..k {
        let (train, held): (Vec<usize>, Vec<usize>) = (0..data.n_rows()).partition(|&i| folds[i] != f);
        let enc = match &grid {
            Some(g) => Encoding::Binned(g.clone()),
            None => Encoding::Raw(raw_scaling(data, &train)),
        };
        let y_train: Vec<u8> = train.iter().map(|&i| target[i]).collect();
        let beta = fit_logistic(&enc.rows(data, &train), enc.ncols(p), &y_train, BASELINE_RIDGE)?;
        let held_rows = enc.rows(data, &held);
        let scores: Vec<f64> = (0..held.len()).map(|r| held_rows.dot(r, &beta)).collect();
        let y_held: Vec<u8> = held.iter().map(|&i| target[i]).collect();
        aucs.push(auc(&scores, &y_held)?);
    }
    let (mean_auc, sd_auc) = mean_sd(&aucs);
    Ok(ComparisonRow {
        method: spec.method.to_string(),
        fold_aucs: aucs,
        mean_auc,
        sd_auc,
        kept_vars: p,
        total_bins: grid.as_ref().map_or(p, BinGrid::total_bins),
        fold_hash: fold_hash(folds),
    })
}

fn evaluate_abm(
    data: &Dataset,
    abm: &AbmConfig,
    folds: &[usize],
    k: usize,
    seed: u64,
) -> Result<(ComparisonRow, PathResult)> {
    let grid = fit_grid(data, abm.nbins)?;
    let design = encode(data, &grid)?;
    let config = PathConfig {
        folds: k,
        seed,
        ..abm.path.clone()
    };
    let res = trace_with_folds(&design, data.target(), &config, folds)?;
    let pt = res.selected_point();
    let row = ComparisonRow {
        method: "abm".into(),
        fold_aucs: pt.fold_aucs.clone(),
        mean_auc: pt.mean_auc,
        sd_auc: pt.sd_auc,
        kept_vars: pt.kept_vars,
        total_bins: pt.total_bins,
        fold_hash: fold_hash(&res.folds),
    };
    Ok((row, res))
}

/// Cross-validates the penalized model and every baseline on one stratified
/// fold labelling. The penalized model is the first row.
pub fn run_comparison(
    data: &Dataset,
    methods: &[BaselineSpec],
    abm: &AbmConfig,
    folds: usize,
    seed: u64,
) -> Result<ComparisonTable> {
    Ok(run_comparison_with_path(data, methods, abm, folds, seed)?.0)
}

/// As [`run_comparison`], also returning the penalized model's path.
pub fn run_comparison_with_path(
    data: &Dataset,
    methods: &[BaselineSpec],
    abm: &AbmConfig,
    folds: usize,
    seed: u64,
) -> Result<(ComparisonTable, PathResult)> {
    for m in methods {
        m.validate()?;
    }
    let labels = stratified_folds(data.target(), folds, seed)?;
    let jobs: Vec<Option<BaselineSpec>> = std::iter::once(None).chain(methods.iter().copied().map(Some)).collect();
    let results = par::map(jobs, |job| match job {
        None => evaluate_abm(data, abm, &labels, folds, seed).map(|(row, path)| (row, Some(path))),
        Some(spec) => evaluate_baseline(data, &spec, &labels, folds).map(|row| (row, None)),
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut abm_path = None;
    for r in results {
        let (row, path) = r?;
        rows.push(row);
        if path.is_some() {
            abm_path = path;
        }
    }
    let path = abm_path.ok_or_else(|| Error::Invariant("penalized model missing from comparison".into()))?;
    Ok((ComparisonTable { rows }, path))
}

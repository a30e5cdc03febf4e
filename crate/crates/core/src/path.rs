//! Regularization path over a (λ₁, λ₂) grid with warm starts, stratified
//! k-fold cross-validation, and one-standard-error model selection.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::EncodedDesign;
use crate::error::{Error, Result};
use crate::model::{self, auc, DEFAULT_MERGE_TOL};
use crate::objective::{nll_gradient, predict_logit, Coefficients};
use crate::par;
use crate::prox::{default_weights, PenaltyParams};
use crate::solver::{FitResult, LogisticProblem, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    /// Number of log-spaced λ₂ values from `λ2_max` down to `ratio·λ2_max`.
    pub lambda2_count: usize,
    pub lambda2_ratio: f64,
    /// λ₁ is `multiplier·λ₂`, one path strand per multiplier.
    pub lambda1_multipliers: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    /// Tolerance used when counting kept variables and merged bins.
    pub merge_tol: f64,
    /// `None` means `sqrt(m_j)`.
    pub group_weights: Option<Vec<f64>>,
    pub solver: SolverConfig,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            lambda2_count: 20,
            lambda2_ratio: 1e-3,
            lambda1_multipliers: vec![0.25, 0.5, 1.0, 2.0],
            folds: 5,
            seed: 0,
            merge_tol: DEFAULT_MERGE_TOL,
            group_weights: None,
            solver: SolverConfig::default(),
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda2_count == 0 || self.lambda1_multipliers.is_empty() {
            return Err(Error::InvalidConfig("lambda grids must be nonempty".into()));
        }
        if !(self.lambda2_ratio > 0.0 && self.lambda2_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda2 ratio must lie in (0,1), got {}",
                self.lambda2_ratio
            )));
        }
        if self
            .lambda1_multipliers
            .iter()
            .any(|m| !(*m >= 0.0 && m.is_finite()))
        {
            return Err(Error::InvalidConfig("lambda1 multipliers must be >= 0".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig(format!("folds must be >= 2, got {}", self.folds)));
        }
        if !(self.merge_tol >= 0.0) {
            return Err(Error::InvalidConfig("merge tolerance must be >= 0".into()));
        }
        self.solver.validate()
    }

    /// λ₂ values, largest first.
    pub fn lambda2_grid(&self, lambda2_max: f64) -> Vec<f64> {
        if self.lambda2_count == 1 {
            return vec![lambda2_max];
        }
        let last = (self.lambda2_count - 1) as f64;
        (0..self.lambda2_count)
            .map(|i| lambda2_max * self.lambda2_ratio.powf(i as f64 / last))
            .collect()
    }

    fn weights(&self, widths: &[usize]) -> Result<Vec<f64>> {
        match &self.group_weights {
            Some(w) if w.len() != widths.len() => Err(Error::Shape(format!(
                "{} group weights for {} groups",
                w.len(),
                widths.len()
            ))),
            Some(w) => Ok(w.clone()),
            None => Ok(default_weights(widths)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
    pub sd_auc: f64,
    /// From the full-data fit at this point.
    pub kept_vars: usize,
    pub total_bins: usize,
}

/// Solver outcome of one fit along the path.
#[derive(Debug, Clone, PartialEq)]
pub struct FitLog {
    /// `None` for the full-data fit.
    pub fold: Option<usize>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace_monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub lambda2_max: f64,
    /// Strand-major: all λ₂ values of the first multiplier, then the next.
    pub points: Vec<PathPoint>,
    pub selected: usize,
    /// Fold of every row.
    pub folds: Vec<usize>,
    /// Fit on all rows at the selected point.
    pub final_fit: FitResult,
    /// Fits on all rows at every point, in `points` order.
    pub full_fits: Vec<FitResult>,
    pub fit_log: Vec<FitLog>,
}

impl PathResult {
    pub fn selected_point(&self) -> &PathPoint {
        &self.points[self.selected]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "lambda1", "lambda2", "mean_auc", "sd_auc", "kept_vars", "total_bins", "selected",
        ])?;
        for (i, pt) in self.points.iter().enumerate() {
            w.write_record([
                pt.lambda1.to_string(),
                pt.lambda2.to_string(),
                pt.mean_auc.to_string(),
                pt.sd_auc.to_string(),
                pt.kept_vars.to_string(),
                pt.total_bins.to_string(),
                u8::from(i == self.selected).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn check_both_classes(target: &[u8]) -> Result<()> {
    let ones = target.iter().filter(|&&y| y == 1).count();
    if ones == 0 || ones == target.len() {
        return Err(Error::DegenerateTarget("target has a single class".into()));
    }
    Ok(())
}

/// Smallest λ₂ at which, with λ₁ = 0, every group is exactly zero:
/// `max_j ‖∇_j nll(0, logit ȳ)‖₂ / w_j`.
pub fn lambda2_max(design: &EncodedDesign, target: &[u8], weights: &[f64]) -> Result<f64> {
    check_both_classes(target)?;
    if weights.len() != design.n_vars() {
        return Err(Error::Shape(format!(
            "{} weights for {} groups",
            weights.len(),
            design.n_vars()
        )));
    }
    let start = LogisticProblem::new(design, target)?.initial_point();
    let grad = nll_gradient(design, target, &start)?;
    Ok(grad
        .groups()
        .zip(weights)
        .map(|(g, w)| g.iter().map(|x| x * x).sum::<f64>().sqrt() / w)
        .fold(0.0, f64::max))
}

/// Stratified fold labels. Each class is shuffled with ChaCha8 seeded by
/// `seed` and dealt round-robin, the negatives continuing where the
/// positives stopped so fold sizes stay within one of each other.
pub fn stratified_folds(target: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("folds must be >= 2, got {k}")));
    }
    let mut pos: Vec<usize> = (0..target.len()).filter(|&i| target[i] == 1).collect();
    let mut neg: Vec<usize> = (0..target.len()).filter(|&i| target[i] != 1).collect();
    if pos.len() < k || neg.len() < k {
        return Err(Error::DegenerateTarget(format!(
            "{} events and {} non-events cannot fill {k} folds with both classes",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![0; target.len()];
    for (r, &i) in pos.iter().enumerate() {
        folds[i] = r % k;
    }
    let shift = pos.len() % k;
    for (r, &i) in neg.iter().enumerate() {
        folds[i] = (r + shift) % k;
    }
    Ok(folds)
}

fn split(folds: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&i| folds[i] != fold)
}

/// Fits `params` in order on the rows outside `fold`, each warm-started from
/// the previous solution. Held-out rows are never read.
pub fn fold_fits(
    design: &EncodedDesign,
    target: &[u8],
    folds: &[usize],
    fold: usize,
    params: &[PenaltyParams],
    solver: &SolverConfig,
) -> Result<Vec<FitResult>> {
    let (train, _) = split(folds, fold);
    let sub = design.subset(&train);
    let y: Vec<u8> = train.iter().map(|&i| target[i]).collect();
    strand(&LogisticProblem::new(&sub, &y)?, params, solver)
}

fn strand(problem: &LogisticProblem, params: &[PenaltyParams], solver: &SolverConfig) -> Result<Vec<FitResult>> {
    let mut out: Vec<FitResult> = Vec::with_capacity(params.len());
    for p in params {
        let warm: Option<&Coefficients> = out.last().map(|f| &f.beta);
        let res = problem.fit(p, solver, warm)?;
        out.push(res);
    }
    Ok(out)
}

/// Index chosen by the one-standard-error rule: among points whose mean AUC
/// is within one standard error of the best, prefer fewer kept variables,
/// then fewer bins, then higher mean AUC, then grid order.
pub fn select_one_se(points: &[PathPoint], folds: usize) -> usize {
    let best = points
        .iter()
        .enumerate()
        .fold(0, |b, (i, p)| if p.mean_auc > points[b].mean_auc { i } else { b });
    let threshold = points[best].mean_auc - points[best].sd_auc / (folds as f64).sqrt();
    (0..points.len())
        .filter(|&i| points[i].mean_auc >= threshold)
        .min_by(|&a, &b| {
            let (pa, pb) = (&points[a], &points[b]);
            pa.kept_vars
                .cmp(&pb.kept_vars)
                .then(pa.total_bins.cmp(&pb.total_bins))
                .then(pb.mean_auc.total_cmp(&pa.mean_auc))
                .then(a.cmp(&b))
        })
        .unwrap_or(best)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Walks the grid and cross-validates every point with stratified folds
/// drawn from `config.seed`.
pub fn trace(design: &EncodedDesign, target: &[u8], config: &PathConfig) -> Result<PathResult> {
    config.validate()?;
    let folds = stratified_folds(target, config.folds, config.seed)?;
    trace_with_folds(design, target, config, &folds)
}

/// As [`trace`] with a caller-supplied fold labelling in `0..config.folds`.
pub fn trace_with_folds(
    design: &EncodedDesign,
    target: &[u8],
    config: &PathConfig,
    folds: &[usize],
) -> Result<PathResult> {
    config.validate()?;
    if folds.len() != design.n_rows() || folds.iter().any(|&f| f >= config.folds) {
        return Err(Error::Shape("fold labels do not match the design".into()));
    }
    let weights = config.weights(&design.widths())?;
    let lmax = lambda2_max(design, target, &weights)?;
    let l2 = config.lambda2_grid(lmax);
    let strands: Vec<Vec<PenaltyParams>> = config
        .lambda1_multipliers
        .iter()
        .map(|&m| {
            l2.iter()
                .map(|&l| PenaltyParams::new(m * l, l, weights.clone()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    // Every (fold or full data, strand) pair is an independent unit of work.
    let k = config.folds;
    let mut units = Vec::new();
    for fold in (0..k).map(Some).chain(std::iter::once(None)) {
        for s in 0..strands.len() {
            units.push((fold, s));
        }
    }
    type UnitOutput = (Vec<FitResult>, Vec<f64>, Vec<FitLog>);
    let results = par::map(units.clone(), |(fold, s)| -> Result<UnitOutput> {
        match fold {
            None => {
                let fits = strand(&LogisticProblem::new(design, target)?, &strands[s], &config.solver)?;
                let logs = fits.iter().map(|r| log_entry(None, r)).collect();
                Ok((fits, Vec::new(), logs))
            }
            Some(f) => {
                let fits = fold_fits(design, target, folds, f, &strands[s], &config.solver)?;
                let (_, held) = split(folds, f);
                let held_design = design.subset(&held);
                let held_y: Vec<u8> = held.iter().map(|&i| target[i]).collect();
                let aucs = fits
                    .iter()
                    .map(|r| auc(&predict_logit(&held_design, &r.beta)?, &held_y))
                    .collect::<Result<Vec<_>>>()?;
                let logs = fits.iter().map(|r| log_entry(Some(f), r)).collect();
                Ok((Vec::new(), aucs, logs))
            }
        }
    });

    let n_strand = l2.len();
    let n_points = strands.len() * n_strand;
    let mut fold_aucs = vec![vec![0.0; k]; n_points];
    let mut full_fits: Vec<Option<FitResult>> = vec![None; n_points];
    let mut fit_log = Vec::new();
    for ((fold, s), res) in units.into_iter().zip(results) {
        let (fits, aucs, logs) = res?;
        fit_log.extend(logs);
        match fold {
            Some(f) => {
                for (i, a) in aucs.into_iter().enumerate() {
                    fold_aucs[s * n_strand + i][f] = a;
                }
            }
            None => {
                for (i, r) in fits.into_iter().enumerate() {
                    full_fits[s * n_strand + i] = Some(r);
                }
            }
        }
    }
    let full_fits: Vec<FitResult> = full_fits
        .into_iter()
        .map(|f| f.ok_or_else(|| Error::Invariant("missing full-data fit".into())))
        .collect::<Result<_>>()?;

    let points: Vec<PathPoint> = full_fits
        .iter()
        .enumerate()
        .map(|(idx, r)| {
            let (kept_vars, total_bins) = model::bin_structure(&r.beta, config.merge_tol);
            let (mean_auc, sd_auc) = mean_sd(&fold_aucs[idx]);
            PathPoint {
                lambda1: r.params.lambda1,
                lambda2: r.params.lambda2,
                fold_aucs: fold_aucs[idx].clone(),
                mean_auc,
                sd_auc,
                kept_vars,
                total_bins,
            }
        })
        .collect();
    let selected = select_one_se(&points, k);
    Ok(PathResult {
        lambda2_max: lmax,
        final_fit: full_fits[selected].clone(),
        points,
        selected,
        folds: folds.to_vec(),
        full_fits,
        fit_log,
    })
}

fn log_entry(fold: Option<usize>, r: &FitResult) -> FitLog {
    FitLog {
        fold,
        lambda1: r.params.lambda1,
        lambda2: r.params.lambda2,
        iterations: r.iterations,
        converged: r.converged,
        trace_monotone: r.trace.windows(2).all(|w| w[1] <= w[0]),
    }
}

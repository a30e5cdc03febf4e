//! Accelerated proximal gradient (FISTA) with backtracking and
//! objective-based adaptive restart.

use crate::dataset::EncodedDesign;
use crate::error::{Error, Result};
use crate::objective::{self, Coefficients};
use crate::prox::{self, PenaltyParams};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once `|F_{k-1} − F_k| ≤ rel_tol·|F_k|`.
    pub rel_tol: f64,
    /// `None` uses `4n/‖X‖²_F`, the logistic Lipschitz surrogate.
    pub initial_step: Option<f64>,
    pub backtrack: f64,
    pub restart: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 10_000,
            rel_tol: 1e-8,
            initial_step: None,
            backtrack: 0.5,
            restart: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig("rel_tol must be positive".into()));
        }
        if let Some(s) = self.initial_step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig("initial step must be positive".into()));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidConfig("backtracking factor must lie in (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: Coefficients,
    pub params: PenaltyParams,
    /// Penalized objective after every accepted iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub step: f64,
}

impl FitResult {
    pub fn objective(&self) -> Option<f64> {
        self.trace.last().copied()
    }
}

/// A design and target with rows in canonical order, ready for repeated fits.
///
/// Rows are sorted by their bin pattern and then by target. Rows with the
/// same key are interchangeable in every sum, so fits are bitwise
/// independent of the order rows arrive in.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    bins: Vec<u32>,
    y: Vec<f64>,
    offsets: Vec<usize>,
    p: usize,
    mean_target: f64,
}

impl LogisticProblem {
    pub fn new(design: &EncodedDesign, target: &[u8]) -> Result<Self> {
        let n = design.n_rows();
        if target.len() != n {
            return Err(Error::Shape(format!("target has {} rows, design has {n}", target.len())));
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            design
                .row_bins(a)
                .cmp(design.row_bins(b))
                .then(target[a].cmp(&target[b]))
        });
        let p = design.n_vars();
        let mut bins = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for &i in &order {
            bins.extend_from_slice(design.row_bins(i));
            y.push(f64::from(target[i]));
        }
        let mean_target = y.iter().sum::<f64>() / n as f64;
        Ok(LogisticProblem {
            bins,
            y,
            offsets: design.offsets().to_vec(),
            p,
            mean_target,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn mean_target(&self) -> f64 {
        self.mean_target
    }

    /// `β = 0`, `β₀ = logit(ȳ)` clamped to `[−10, 10]`.
    pub fn initial_point(&self) -> Coefficients {
        let mut beta = Coefficients::zeros(&self.widths());
        let ybar = self.mean_target;
        beta.set_intercept((ybar / (1.0 - ybar)).ln().clamp(-10.0, 10.0));
        beta
    }

    pub fn loss(&self, beta: &Coefficients) -> f64 {
        objective::loss_only(&self.bins, &self.offsets, &self.y, beta.intercept(), beta.values())
    }

    pub fn gradient(&self, beta: &Coefficients) -> Coefficients {
        let mut grad = Coefficients::zeros(&self.widths());
        let mut g0 = 0.0;
        objective::loss_and_grad(
            &self.bins,
            &self.offsets,
            &self.y,
            beta.intercept(),
            beta.values(),
            &mut g0,
            grad.values_mut(),
        );
        grad.set_intercept(g0);
        grad
    }

    fn check(&self, beta: &Coefficients) -> Result<()> {
        if beta.offsets() != self.offsets.as_slice() {
            return Err(Error::Shape(format!(
                "warm start groups {:?} do not match design groups {:?}",
                beta.widths(),
                self.widths()
            )));
        }
        Ok(())
    }

    pub fn fit(
        &self,
        params: &PenaltyParams,
        config: &SolverConfig,
        warm_start: Option<&Coefficients>,
    ) -> Result<FitResult> {
        config.validate()?;
        params.validate()?;
        if params.group_weights.len() != self.p {
            return Err(Error::Shape(format!(
                "{} group weights for {} groups",
                params.group_weights.len(),
                self.p
            )));
        }
        let mut x = match warm_start {
            Some(w) => {
                self.check(w)?;
                w.clone()
            }
            None => self.initial_point(),
        };
        let ncols = x.values().len();
        let n = self.n_rows() as f64;
        // ‖X‖²_F counts one intercept entry and p indicators per row.
        let mut step = config
            .initial_step
            .unwrap_or(4.0 * n / (n * (self.p as f64 + 1.0)));

        let penalty = |b: &Coefficients| objective::penalty_value(b, params);
        let mut f_x = self.loss(&x) + penalty(&x);
        if !f_x.is_finite() {
            return Err(Error::NonFiniteObjective(0));
        }

        let mut x_prev = x.clone();
        let mut y = x.clone();
        let mut cand = x.clone();
        let mut grad = vec![0.0; ncols];
        let mut scratch = Vec::new();
        let mut t = 1.0f64;
        let mut momentum = false;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;

        for it in 1..=config.max_iters {
            iterations = it;
            let mut g0 = 0.0;
            let f_y = objective::loss_and_grad(
                &self.bins,
                &self.offsets,
                &self.y,
                y.intercept(),
                y.values(),
                &mut g0,
                &mut grad,
            );
            let slack = 8.0 * f64::EPSILON * f_y.abs();
            let f_c = loop {
                cand.set_intercept(y.intercept() - step * g0);
                for ((c, &yv), &g) in cand.values_mut().iter_mut().zip(y.values()).zip(&grad) {
                    *c = yv - step * g;
                }
                prox::prox_groups_in_place(cand.values_mut(), &self.offsets, step, params, &mut scratch);
                let f_c = self.loss(&cand);
                if !f_c.is_finite() {
                    return Err(Error::NonFiniteObjective(it));
                }
                let d0 = cand.intercept() - y.intercept();
                let mut lin = g0 * d0;
                let mut sq = d0 * d0;
                for ((&c, &yv), &g) in cand.values().iter().zip(y.values()).zip(&grad) {
                    let d = c - yv;
                    lin += g * d;
                    sq += d * d;
                }
                if f_c <= f_y + lin + sq / (2.0 * step) + slack {
                    break f_c;
                }
                step *= config.backtrack;
                if step < 1e-30 {
                    return Err(Error::Invariant("backtracking step underflow".into()));
                }
            };
            let f_new = f_c + penalty(&cand);
            if !f_new.is_finite() {
                return Err(Error::NonFiniteObjective(it));
            }

            if config.restart && f_new > f_x {
                if !momentum {
                    // a plain proximal step from x no longer decreases F
                    converged = true;
                    break;
                }
                y.clone_from(&x);
                t = 1.0;
                momentum = false;
                continue;
            }

            std::mem::swap(&mut x_prev, &mut x);
            x.clone_from(&cand);
            let f_prev = f_x;
            f_x = f_new;
            trace.push(f_x);

            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let coef = (t - 1.0) / t_next;
            t = t_next;
            momentum = coef > 0.0;
            y.set_intercept(x.intercept() + coef * (x.intercept() - x_prev.intercept()));
            for ((yv, &a), &b) in y.values_mut().iter_mut().zip(x.values()).zip(x_prev.values()) {
                *yv = a + coef * (a - b);
            }

            if (f_prev - f_x).abs() <= config.rel_tol * f_x.abs() {
                converged = true;
                break;
            }
        }

        Ok(FitResult {
            beta: x,
            params: params.clone(),
            trace,
            iterations,
            converged,
            step,
        })
    }
}

/// Minimizes `nll + penalty` from `warm_start` or from the centred default.
pub fn fit(
    design: &EncodedDesign,
    target: &[u8],
    params: &PenaltyParams,
    config: &SolverConfig,
    warm_start: Option<&Coefficients>,
) -> Result<FitResult> {
    LogisticProblem::new(design, target)?.fit(params, config, warm_start)
}

/// `nll(β) + penalty(β)`.
pub fn objective_at(
    design: &EncodedDesign,
    target: &[u8],
    beta: &Coefficients,
    params: &PenaltyParams,
) -> Result<f64> {
    Ok(objective::nll(design, target, beta)? + objective::penalty_value(beta, params))
}

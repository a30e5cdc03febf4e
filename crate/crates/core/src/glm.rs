//! Newton–Raphson for plain logistic regression with a small ridge. Used for
//! the baseline binners and for refitting merged bins.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::objective::{log1pexp, sigmoid};

/// Row-major sparse design where every row has the same number of entries.
#[derive(Debug, Clone, Default)]
pub struct SparseRows {
    width: usize,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    pub fn new(width: usize) -> Self {
        SparseRows {
            width,
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn push(&mut self, entries: &[(usize, f64)]) {
        assert_eq!(entries.len(), self.width);
        for &(c, v) in entries {
            self.cols.push(c);
            self.vals.push(v);
        }
    }

    pub fn n_rows(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.cols.len() / self.width
        }
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = i * self.width..(i + 1) * self.width;
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn dot(&self, i: usize, beta: &[f64]) -> f64 {
        self.row(i).map(|(c, v)| v * beta[c]).sum()
    }
}

/// Mean logistic loss plus `ridge/2·‖β_{1..}‖²`; column 0 is the unpenalized
/// intercept.
fn objective(rows: &SparseRows, y: &[u8], beta: &[f64], ridge: f64) -> f64 {
    let n = rows.n_rows();
    let loss: f64 = (0..n)
        .map(|i| {
            let z = rows.dot(i, beta);
            log1pexp(z) - f64::from(y[i]) * z
        })
        .sum::<f64>()
        / n as f64;
    loss + 0.5 * ridge * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Minimizes the ridge-stabilized logistic loss over `ncols` coefficients,
/// column 0 being the intercept.
pub fn fit_logistic(rows: &SparseRows, ncols: usize, y: &[u8], ridge: f64) -> Result<Vec<f64>> {
    let n = rows.n_rows();
    if n == 0 || y.len() != n {
        return Err(Error::Shape(format!("{n} design rows for {} targets", y.len())));
    }
    if !(ridge > 0.0) {
        return Err(Error::InvalidConfig("ridge must be positive".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mut beta = vec![0.0; ncols];
    let mut f = objective(rows, y, &beta, ridge);
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(ncols);
        let mut hess = DMatrix::<f64>::zeros(ncols, ncols);
        for i in 0..n {
            let z = rows.dot(i, &beta);
            let p = sigmoid(z);
            let r = (p - f64::from(y[i])) * inv_n;
            let w = p * (1.0 - p) * inv_n;
            for (a, va) in rows.row(i) {
                grad[a] += r * va;
                for (b, vb) in rows.row(i) {
                    hess[(a, b)] += w * va * vb;
                }
            }
        }
        for c in 1..ncols {
            grad[c] += ridge * beta[c];
            hess[(c, c)] += ridge;
        }
        let chol = hess
            .clone()
            .cholesky()
            .or_else(|| {
                let jitter = 1e-10 * hess.diagonal().max().max(1.0);
                (hess + DMatrix::identity(ncols, ncols) * jitter).cholesky()
            })
            .ok_or_else(|| Error::Invariant("logistic Hessian not positive definite".into()))?;
        let dir = chol.solve(&(-&grad));
        let decrement = -grad.dot(&dir);
        if decrement < 1e-26 {
            break;
        }
        if decrement < 1e-10 {
            // inside the quadratic convergence region the loss change is
            // below rounding, so take the full step
            beta.iter_mut().zip(dir.iter()).for_each(|(b, d)| *b += d);
            f = objective(rows, y, &beta, ridge);
            continue;
        }
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let trial: Vec<f64> = beta.iter().zip(dir.iter()).map(|(b, d)| b + t * d).collect();
            let ft = objective(rows, y, &trial, ridge);
            if ft <= f - 0.25 * t * decrement {
                beta = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFiniteObjective(0));
    }
    Ok(beta)
}

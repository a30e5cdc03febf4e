//! Logistic loss over the one-hot design, its gradient, and the penalty value.

use crate::dataset::EncodedDesign;
use crate::error::{Error, Result};
use crate::par;
use crate::prox::PenaltyParams;

/// Intercept plus one coefficient vector per variable, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    intercept: f64,
    values: Vec<f64>,
    offsets: Vec<usize>,
}

impl Coefficients {
    pub fn zeros(widths: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(widths.len() + 1);
        offsets.push(0);
        for &w in widths {
            offsets.push(offsets.last().unwrap() + w);
        }
        Coefficients {
            intercept: 0.0,
            values: vec![0.0; *offsets.last().unwrap()],
            offsets,
        }
    }

    pub fn from_groups(intercept: f64, groups: &[Vec<f64>]) -> Self {
        let widths: Vec<usize> = groups.iter().map(Vec::len).collect();
        let mut c = Self::zeros(&widths);
        c.intercept = intercept;
        c.values = groups.concat();
        c
    }

    /// Zero coefficients shaped like `design`.
    pub fn for_design(design: &EncodedDesign) -> Self {
        Self::zeros(&design.widths())
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn set_intercept(&mut self, v: f64) {
        self.intercept = v;
    }

    pub fn n_groups(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn group(&self, j: usize) -> &[f64] {
        &self.values[self.offsets[j]..self.offsets[j + 1]]
    }

    pub fn group_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[self.offsets[j]..self.offsets[j + 1]]
    }

    pub fn groups(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.offsets.windows(2).map(|w| &self.values[w[0]..w[1]])
    }

    pub fn widths(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// All group coefficients, concatenated.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn check_shape(&self, design: &EncodedDesign) -> Result<()> {
        if self.offsets != design.offsets() {
            return Err(Error::Shape(format!(
                "coefficient groups {:?} do not match design groups {:?}",
                self.widths(),
                design.widths()
            )));
        }
        Ok(())
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn log1pexp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    if z >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    }
}

/// Logit `z_i = β₀ + Σ_j β_{j, bin(i,j)}` of every row.
pub fn predict_logit(design: &EncodedDesign, beta: &Coefficients) -> Result<Vec<f64>> {
    beta.check_shape(design)?;
    let p = design.n_vars();
    let offsets = design.offsets();
    let bins = design.raw_bins();
    Ok((0..design.n_rows())
        .map(|i| row_logit(&bins[i * p..(i + 1) * p], offsets, beta.intercept, &beta.values))
        .collect())
}

#[inline]
fn row_logit(row: &[u32], offsets: &[usize], intercept: f64, values: &[f64]) -> f64 {
    let mut z = intercept;
    for (j, &b) in row.iter().enumerate() {
        z += values[offsets[j] + b as usize];
    }
    z
}

fn check_target(design: &EncodedDesign, target: &[u8]) -> Result<()> {
    if target.len() != design.n_rows() {
        return Err(Error::Shape(format!(
            "target has {} rows, design has {}",
            target.len(),
            design.n_rows()
        )));
    }
    Ok(())
}

/// Mean negative log-likelihood `(1/n) Σ log(1 + e^{z_i}) − y_i z_i`.
pub fn nll(design: &EncodedDesign, target: &[u8], beta: &Coefficients) -> Result<f64> {
    beta.check_shape(design)?;
    check_target(design, target)?;
    let y: Vec<f64> = target.iter().map(|&v| f64::from(v)).collect();
    Ok(loss_only(
        design.raw_bins(),
        design.offsets(),
        &y,
        beta.intercept,
        &beta.values,
    ))
}

/// Gradient of [`nll`]. Each row adds its residual `σ(z_i) − y_i` to the one
/// active column of every group and to the intercept.
pub fn nll_gradient(design: &EncodedDesign, target: &[u8], beta: &Coefficients) -> Result<Coefficients> {
    beta.check_shape(design)?;
    check_target(design, target)?;
    let y: Vec<f64> = target.iter().map(|&v| f64::from(v)).collect();
    let mut grad = Coefficients::for_design(design);
    let mut g0 = 0.0;
    loss_and_grad(
        design.raw_bins(),
        design.offsets(),
        &y,
        beta.intercept,
        &beta.values,
        &mut g0,
        &mut grad.values,
    );
    grad.intercept = g0;
    Ok(grad)
}

/// `λ₁ Σ_j TV(β_j) + λ₂ Σ_j w_j ‖β_j‖₂`. The intercept is not penalized.
pub fn penalty_value(beta: &Coefficients, params: &PenaltyParams) -> f64 {
    assert_eq!(
        beta.n_groups(),
        params.group_weights.len(),
        "one group weight per group"
    );
    beta.groups()
        .zip(&params.group_weights)
        .map(|(g, w)| {
            let tv: f64 = g.windows(2).map(|d| (d[1] - d[0]).abs()).sum();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            params.lambda1 * tv + params.lambda2 * w * norm
        })
        .sum()
}

/// Mean loss over row-major `bins` with per-row float targets.
pub(crate) fn loss_only(
    bins: &[u32],
    offsets: &[usize],
    y: &[f64],
    intercept: f64,
    values: &[f64],
) -> f64 {
    let n = y.len();
    let p = offsets.len() - 1;
    let partial = par::chunks(n, |s, e| {
        let mut acc = 0.0;
        for i in s..e {
            let z = row_logit(&bins[i * p..(i + 1) * p], offsets, intercept, values);
            acc += log1pexp(z) - y[i] * z;
        }
        acc
    });
    partial.into_iter().sum::<f64>() / n as f64
}

/// Mean loss, writing the gradient into `g0` and `grad`.
pub(crate) fn loss_and_grad(
    bins: &[u32],
    offsets: &[usize],
    y: &[f64],
    intercept: f64,
    values: &[f64],
    g0: &mut f64,
    grad: &mut [f64],
) -> f64 {
    let n = y.len();
    let p = offsets.len() - 1;
    let ncols = grad.len();
    let partial = par::chunks(n, |s, e| {
        let mut g = vec![0.0; ncols];
        let mut gi = 0.0;
        let mut acc = 0.0;
        for i in s..e {
            let row = &bins[i * p..(i + 1) * p];
            let z = row_logit(row, offsets, intercept, values);
            let ez = (-z.abs()).exp();
            acc += z.max(0.0) + ez.ln_1p() - y[i] * z;
            let prob = if z >= 0.0 { 1.0 / (1.0 + ez) } else { ez / (1.0 + ez) };
            let r = prob - y[i];
            gi += r;
            for (j, &b) in row.iter().enumerate() {
                g[offsets[j] + b as usize] += r;
            }
        }
        (acc, gi, g)
    });
    let inv_n = 1.0 / n as f64;
    grad.iter_mut().for_each(|x| *x = 0.0);
    let mut loss = 0.0;
    let mut gi_total = 0.0;
    for (acc, gi, g) in partial {
        loss += acc;
        gi_total += gi;
        for (t, v) in grad.iter_mut().zip(g) {
            *t += v;
        }
    }
    grad.iter_mut().for_each(|x| *x *= inv_n);
    *g0 = gi_total * inv_n;
    loss * inv_n
}

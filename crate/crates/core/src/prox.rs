//! Proximal operators of the within-group total variation penalty, the
//! per-group Euclidean norm, and their sum.

use crate::error::{Error, Result};
use crate::objective::Coefficients;

/// Weights of the two penalty terms.
///
/// `lambda1` multiplies the total variation of every group, `lambda2`
/// multiplies the Euclidean norm of group `j` scaled by `group_weights[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub group_weights: Vec<f64>,
}

impl PenaltyParams {
    pub fn new(lambda1: f64, lambda2: f64, group_weights: Vec<f64>) -> Result<Self> {
        let params = PenaltyParams {
            lambda1,
            lambda2,
            group_weights,
        };
        params.validate()?;
        Ok(params)
    }

    /// Weights `sqrt(m_j)` for groups of the given widths.
    pub fn with_default_weights(lambda1: f64, lambda2: f64, widths: &[usize]) -> Result<Self> {
        Self::new(lambda1, lambda2, default_weights(widths))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda1 = {}", self.lambda1)));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda2 = {}", self.lambda2)));
        }
        if let Some(w) = self
            .group_weights
            .iter()
            .find(|w| !(**w > 0.0 && w.is_finite()))
        {
            return Err(Error::InvalidConfig(format!("group weight {w}")));
        }
        Ok(())
    }
}

pub fn default_weights(widths: &[usize]) -> Vec<f64> {
    widths.iter().map(|&m| (m as f64).sqrt()).collect()
}

/// `argmin_u ½‖u − v‖² + t·Σ|u_{k+1} − u_k|`.
///
/// Direct (non-iterative) taut-string scan after Condat (2013). Every
/// merged segment is written from a single value, so ties are exact.
pub fn prox_tv1d(v: &[f64], t: f64) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    prox_tv1d_into(v, t, &mut out);
    out
}

pub fn prox_tv1d_into(input: &[f64], lambda: f64, output: &mut [f64]) {
    let width = input.len();
    assert_eq!(width, output.len());
    if width == 0 {
        return;
    }
    if lambda <= 0.0 || width == 1 {
        output.copy_from_slice(input);
        return;
    }

    // u is the dual variable; [vmin, vmax] bounds the current segment value.
    let (mut k, mut k0) = (0usize, 0usize);
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = input[0] - lambda;
    let mut vmax = input[0] + lambda;
    // last positions where umax = -lambda and umin = lambda
    let mut kplus = 0usize;
    let mut kminus = 0usize;
    let twolambda = 2.0 * lambda;
    let minlambda = -lambda;

    loop {
        while k == width - 1 {
            if umin < 0.0 {
                // negative jump
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = input[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                // positive jump
                loop {
                    output[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = input[k0];
                umax = minlambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                while k0 <= k {
                    output[k0] = vmin;
                    k0 += 1;
                }
                return;
            }
        }
        umin += input[k + 1] - vmin;
        if umin < minlambda {
            loop {
                output[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = input[k0];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = minlambda;
            continue;
        }
        umax += input[k + 1] - vmax;
        if umax > lambda {
            loop {
                output[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = input[k0];
            vmin = vmax - twolambda;
            umin = lambda;
            umax = minlambda;
            continue;
        }
        k += 1;
        if umin >= lambda {
            kminus = k;
            vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
            umin = lambda;
        }
        if umax <= minlambda {
            kplus = k;
            vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
            umax = minlambda;
        }
    }
}

/// Block soft-threshold: zero if `‖v‖₂ ≤ t`, else `v·(1 − t/‖v‖₂)`.
pub fn prox_group(v: &[f64], t: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    prox_group_in_place(&mut out, t);
    out
}

pub fn prox_group_in_place(v: &mut [f64], t: f64) {
    if t <= 0.0 {
        return;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= t {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        let scale = 1.0 - t / norm;
        v.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Group-wise prox of the full penalty on a flat coefficient vector laid
/// out by `offsets`. `scratch` must hold at least the widest group.
pub(crate) fn prox_groups_in_place(
    values: &mut [f64],
    offsets: &[usize],
    step: f64,
    params: &PenaltyParams,
    scratch: &mut Vec<f64>,
) {
    let t1 = step * params.lambda1;
    for (j, w) in offsets.windows(2).enumerate() {
        let group = &mut values[w[0]..w[1]];
        if t1 > 0.0 {
            scratch.clear();
            scratch.extend_from_slice(group);
            prox_tv1d_into(scratch, t1, group);
        }
        prox_group_in_place(group, step * params.lambda2 * params.group_weights[j]);
    }
}

/// Per group: block soft-threshold applied after the total variation prox.
/// The intercept passes through unchanged.
pub fn prox_penalty(beta: &Coefficients, step: f64, params: &PenaltyParams) -> Result<Coefficients> {
    if params.group_weights.len() != beta.n_groups() {
        return Err(Error::Shape(format!(
            "{} group weights for {} groups",
            params.group_weights.len(),
            beta.n_groups()
        )));
    }
    let mut out = beta.clone();
    let mut scratch = Vec::new();
    let offsets = out.offsets().to_vec();
    prox_groups_in_place(out.values_mut(), &offsets, step, params, &mut scratch);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tv(u: &[f64]) -> f64 {
        u.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    fn tv_objective(u: &[f64], v: &[f64], t: f64) -> f64 {
        0.5 * u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + t * tv(u)
    }

    #[test]
    fn tv_zero_is_identity() {
        assert_eq!(prox_tv1d(&[5.0, -2.0, 7.0], 0.0), vec![5.0, -2.0, 7.0]);
    }

    #[test]
    fn tv_constant_fixed_point() {
        for &t in &[0.1, 1.0, 37.0] {
            let out = prox_tv1d(&[0.3, 0.3, 0.3], t);
            assert!(out.iter().all(|&x| x == out[0]));
            assert!((out[0] - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn tv_two_points() {
        // Grid search over the two-point objective.
        let (v, t) = ([1.0, -1.0], 0.5);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for a in 0..=400 {
            for b in 0..=400 {
                let u = [-2.0 + a as f64 * 0.01, -2.0 + b as f64 * 0.01];
                let f = tv_objective(&u, &v, t);
                if f < best.0 {
                    best = (f, u[0], u[1]);
                }
            }
        }
        assert!((best.1 - 0.5).abs() < 1e-9 && (best.2 + 0.5).abs() < 1e-9);
        let out = prox_tv1d(&v, t);
        assert!((out[0] - 0.5).abs() < 1e-15 && (out[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn tv_spike_fuses_to_mean() {
        // Projected subgradient oracle gives (1, 1, 1).
        let out = prox_tv1d(&[0.0, 3.0, 0.0], 1.0);
        assert_eq!(out[0], out[1]);
        assert_eq!(out[1], out[2]);
        assert!((out[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn group_examples() {
        assert_eq!(prox_group(&[3.0, 4.0], 5.0), vec![0.0, 0.0]);
        let out = prox_group(&[3.0, 4.0], 2.5);
        assert!((out[0] - 1.5).abs() < 1e-15 && (out[1] - 2.0).abs() < 1e-15);
        assert_eq!(prox_group(&[3.0, -4.0], 0.0), vec![3.0, -4.0]);
    }

    #[test]
    fn penalty_identity_and_reduction() {
        let beta = Coefficients::from_groups(0.7, &[vec![1.0, -1.0], vec![2.0, 3.0, -1.0]]);
        let params = PenaltyParams::new(0.0, 0.0, vec![1.0, 1.0]).unwrap();
        assert_eq!(prox_penalty(&beta, 1.0, &params).unwrap(), beta);

        let single = Coefficients::from_groups(0.7, &[vec![1.0, -1.0]]);
        let params = PenaltyParams::new(0.5, 0.0, vec![1.0]).unwrap();
        let out = prox_penalty(&single, 1.0, &params).unwrap();
        assert_eq!(out.intercept(), 0.7);
        assert!((out.group(0)[0] - 0.5).abs() < 1e-15);
        assert!((out.group(0)[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn penalty_zeroes_small_groups() {
        let beta = Coefficients::from_groups(0.0, &[vec![0.2, 0.1, 0.3], vec![5.0, -5.0]]);
        let params = PenaltyParams::new(0.05, 1.0, vec![1.0, 1.0]).unwrap();
        let out = prox_penalty(&beta, 1.0, &params).unwrap();
        assert_eq!(out.group(0), &[0.0, 0.0, 0.0]);
        assert!(out.group(1).iter().all(|&x| x != 0.0));
    }

    #[test]
    fn penalty_weight_mismatch() {
        let beta = Coefficients::from_groups(0.0, &[vec![1.0]]);
        let params = PenaltyParams::new(0.0, 1.0, vec![1.0, 1.0]).unwrap();
        assert!(prox_penalty(&beta, 1.0, &params).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(PenaltyParams::new(-1.0, 0.0, vec![]).is_err());
        assert!(PenaltyParams::new(0.0, f64::NAN, vec![]).is_err());
        assert!(PenaltyParams::new(0.0, 0.0, vec![0.0]).is_err());
    }

    fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0f64..5.0, 1..12)
    }

    proptest! {
        #[test]
        fn tv_optimality_by_perturbation(v in vec_strategy(), t in 0.0f64..3.0) {
            let u = prox_tv1d(&v, t);
            let f0 = tv_objective(&u, &v, t);
            for k in 0..u.len() {
                for &d in &[1e-4, -1e-4] {
                    let mut w = u.clone();
                    w[k] += d;
                    prop_assert!(tv_objective(&w, &v, t) >= f0 - 1e-12);
                }
            }
            // shifting a whole fused segment must not help either
            let mut start = 0;
            while start < u.len() {
                let mut end = start;
                while end + 1 < u.len() && u[end + 1] == u[start] {
                    end += 1;
                }
                for &d in &[1e-4, -1e-4] {
                    let mut w = u.clone();
                    w[start..=end].iter_mut().for_each(|x| *x += d);
                    prop_assert!(tv_objective(&w, &v, t) >= f0 - 1e-12);
                }
                start = end + 1;
            }
        }

        #[test]
        fn tv_nonexpansive(v in vec_strategy(), seed in vec_strategy(), t in 0.0f64..3.0) {
            let w: Vec<f64> = v.iter().zip(seed.iter().cycle()).map(|(a, b)| a + b).collect();
            let pv = prox_tv1d(&v, t);
            let pw = prox_tv1d(&w, t);
            let d_out: f64 = pv.iter().zip(&pw).map(|(a, b)| (a - b).powi(2)).sum();
            let d_in: f64 = v.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assert!(d_out.sqrt() <= d_in.sqrt() + 1e-12);
        }

        #[test]
        fn tv_monotone_in_t(v in vec_strategy(), t1 in 0.0f64..3.0, dt in 0.0f64..3.0) {
            let a = tv(&prox_tv1d(&v, t1));
            let b = tv(&prox_tv1d(&v, t1 + dt));
            prop_assert!(b <= a + 1e-12);
        }

        #[test]
        fn tv_large_t_gives_mean(v in vec_strategy()) {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let spread: f64 = v.iter().map(|x| (x - mean).abs()).sum();
            let out = prox_tv1d(&v, spread + 1.0);
            for x in &out {
                prop_assert_eq!(*x, out[0]);
                prop_assert!((x - mean).abs() < 1e-12);
            }
        }

        #[test]
        fn group_colinear(v in vec_strategy(), t in 0.0f64..10.0) {
            let out = prox_group(&v, t);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                let scale = out.iter().map(|x| x * x).sum::<f64>().sqrt() / norm;
                for (a, b) in out.iter().zip(&v) {
                    prop_assert!((a - scale * b).abs() < 1e-12);
                }
            }
        }
    }
}

//! Acceptance criteria, one line of output per criterion.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture` to see
//! the report.

use std::fmt::Write as _;
use std::fs;
use std::time::{Duration, Instant};

use autobin::baselines::{run_comparison_with_path, AbmConfig, BaselineSpec, Method};
use autobin::cli::{cmd_fit, RunConfig};
use autobin::synth::{generate, SynthSpec};
use autobin::{
    encode, extract, fit, fit_grid, lambda2_max, nll, nll_gradient, prox_penalty, Coefficients, Dataset,
    EncodedDesign, FitResult, PathConfig, PenaltyParams, SolverConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn run(name: &'static str, limit: Duration, body: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = body();
    let elapsed = start.elapsed();
    let within = elapsed <= limit;
    Outcome {
        name,
        pass: pass && within,
        detail: if within {
            detail
        } else {
            format!("{detail}; over time limit {limit:?}")
        },
        elapsed,
    }
}

fn monotone(fit: &FitResult) -> bool {
    fit.trace.windows(2).all(|w| w[1] <= w[0])
}

// ---------------------------------------------------------------- prox oracle

/// `½‖u − v‖² + λ₁ Σ|u_{k+1} − u_k| + λ₂‖u‖`.
fn prox_objective(u: &[f64], v: &[f64], l1: f64, l2: f64) -> f64 {
    let fit: f64 = u.iter().zip(v).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    let tv: f64 = u.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    fit + l1 * tv + l2 * norm
}

/// Exact minimizer by enumerating the sign of every adjacent difference.
///
/// For a fixed pattern `s ∈ {−1, 0, +1}^{m−1}` the zero entries tie
/// neighbours into segments and the TV term is linear, `λ₁⟨Dᵀs, u⟩`. With
/// segment sizes `n_l` the restricted problem in `φ = W^{1/2}θ` is a plain
/// group shrink of `b = W^{-1/2} Pᵀ(v − λ₁Dᵀs)`. The true minimizer is the
/// restricted solution of its own sign pattern, so the best candidate wins.
fn prox_oracle(v: &[f64], l1: f64, l2: f64) -> Vec<f64> {
    let m = v.len();
    let mut best = vec![0.0; m];
    let mut best_obj = prox_objective(&best, v, l1, l2);
    let patterns = 3usize.pow((m - 1) as u32);
    for code in 0..patterns {
        let mut s = vec![0.0; m - 1];
        let mut c = code;
        for sk in s.iter_mut() {
            *sk = (c % 3) as f64 - 1.0;
            c /= 3;
        }
        let mut seg = vec![0usize; m];
        for k in 1..m {
            seg[k] = seg[k - 1] + usize::from(s[k - 1] != 0.0);
        }
        let nseg = seg[m - 1] + 1;
        let mut size = vec![0.0f64; nseg];
        let mut sums = vec![0.0; nseg];
        for i in 0..m {
            let left = if i > 0 { s[i - 1] } else { 0.0 };
            let right = if i + 1 < m { s[i] } else { 0.0 };
            size[seg[i]] += 1.0;
            sums[seg[i]] += v[i] - l1 * (left - right);
        }
        let b: Vec<f64> = sums.iter().zip(&size).map(|(a, n)| a / n.sqrt()).collect();
        let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = if norm > l2 { 1.0 - l2 / norm } else { 0.0 };
        let u: Vec<f64> = (0..m).map(|i| scale * b[seg[i]] / size[seg[i]].sqrt()).collect();
        let obj = prox_objective(&u, v, l1, l2);
        if obj < best_obj {
            best_obj = obj;
            best = u;
        }
    }
    best
}

fn criterion_prox() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = rng.gen_range(1..=6);
        let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let l1 = rng.gen_range(0.0..2.0);
        let l2 = rng.gen_range(0.0..2.0);
        let params = PenaltyParams::new(l1, l2, vec![1.0]).unwrap();
        let got = prox_penalty(&Coefficients::from_groups(0.0, &[v.clone()]), 1.0, &params).unwrap();
        let want = prox_oracle(&v, l1, l2);
        for (a, b) in got.values().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    (worst <= 1e-6, format!("1000 instances, max |Δ|∞ = {worst:.2e}"))
}

// ------------------------------------------------------------- gradient check

fn random_design(rng: &mut ChaCha8Rng, n: usize, widths: &[usize]) -> EncodedDesign {
    let mut bins = Vec::with_capacity(n * widths.len());
    for _ in 0..n {
        for &w in widths {
            bins.push(rng.gen_range(0..w) as u32);
        }
    }
    EncodedDesign::from_bins(bins, widths).unwrap()
}

fn criterion_gradient() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(20..200);
        let p = rng.gen_range(1..=4);
        let widths: Vec<usize> = (0..p).map(|_| rng.gen_range(2..=8)).collect();
        let design = random_design(&mut rng, n, &widths);
        let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let groups: Vec<Vec<f64>> = widths
            .iter()
            .map(|&w| (0..w).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let beta = Coefficients::from_groups(rng.gen_range(-1.0..1.0), &groups);
        let grad = nll_gradient(&design, &y, &beta).unwrap();

        let mut analytic = vec![grad.intercept()];
        analytic.extend_from_slice(grad.values());
        let at = |shift: usize, delta: f64| {
            let mut b = beta.clone();
            if shift == 0 {
                b.set_intercept(b.intercept() + delta);
            } else {
                b.values_mut()[shift - 1] += delta;
            }
            nll(&design, &y, &b).unwrap()
        };
        for (k, &g) in analytic.iter().enumerate() {
            let fd = (at(k, h) - at(k, -h)) / (2.0 * h);
            let scale = g.abs().max(fd.abs());
            // Coordinates whose true value is zero (empty bins) must vanish
            // in both estimates.
            let err = if scale < 1e-9 { 0.0 } else { (g - fd).abs() / scale };
            worst = worst.max(err);
        }
    }
    (worst < 1e-5, format!("100 instances, max relative error = {worst:.2e}"))
}

// ----------------------------------------------------------- unpenalized IRLS

/// Newton iterations on the reference-coded design (first bin of every
/// variable dropped), which has full column rank when no bin is separated.
fn irls_oracle(design: &EncodedDesign, y: &[u8]) -> f64 {
    let n = design.n_rows();
    let widths = design.widths();
    let cols = 1 + widths.iter().map(|w| w - 1).sum::<usize>();
    let mut x = DMatrix::<f64>::zeros(n, cols);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        let mut base = 1;
        for (j, &w) in widths.iter().enumerate() {
            let b = design.row_bins(i)[j] as usize;
            if b > 0 {
                x[(i, base + b - 1)] = 1.0;
            }
            base += w - 1;
        }
    }
    let yv = DVector::from_iterator(n, y.iter().map(|&v| f64::from(v)));
    let mut theta = DVector::<f64>::zeros(cols);
    let loss = |theta: &DVector<f64>| {
        let z = &x * theta;
        (0..n)
            .map(|i| {
                let zi = z[i];
                let softplus = zi.max(0.0) + (-zi.abs()).exp().ln_1p();
                softplus - yv[i] * zi
            })
            .sum::<f64>()
            / n as f64
    };
    for _ in 0..100 {
        let z = &x * &theta;
        let mu = z.map(|v| 1.0 / (1.0 + (-v).exp()));
        let w = mu.map(|m| m * (1.0 - m));
        let grad = x.transpose() * (&mu - &yv);
        let mut xw = x.clone();
        for i in 0..n {
            xw.row_mut(i).scale_mut(w[i]);
        }
        let hess = x.transpose() * xw;
        let step = hess.cholesky().expect("oracle Hessian is positive definite").solve(&grad);
        theta -= &step;
        if step.amax() < 1e-13 {
            break;
        }
    }
    loss(&theta)
}

fn criterion_unpenalized(monotone_ok: &mut bool) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let widths = [4usize, 5, 3];
    let n = 200;
    let design = random_design(&mut rng, n, &widths);
    let effects: [&[f64]; 3] = [&[-0.8, 0.0, 0.5, 1.0], &[0.6, -0.4, 0.0, 0.3, -0.7], &[0.2, -0.5, 0.4]];
    let y: Vec<u8> = (0..n)
        .map(|i| {
            let z: f64 = (0..3).map(|j| effects[j][design.row_bins(i)[j] as usize]).sum();
            u8::from(rng.gen::<f64>() < 1.0 / (1.0 + (-z).exp()))
        })
        .collect();
    // Nonseparable: every bin holds both classes.
    for (j, &w) in widths.iter().enumerate() {
        for b in 0..w {
            let rows: Vec<u8> = (0..n).filter(|&i| design.row_bins(i)[j] as usize == b).map(|i| y[i]).collect();
            assert!(rows.contains(&0) && rows.contains(&1), "bin ({j}, {b}) is separated");
        }
    }
    let params = PenaltyParams::with_default_weights(0.0, 0.0, &widths).unwrap();
    let res = fit(&design, &y, &params, &SolverConfig::default(), None).unwrap();
    *monotone_ok &= monotone(&res);
    let ours = res.objective().unwrap();
    let oracle = irls_oracle(&design, &y);
    let gap = (ours - oracle).abs();
    (gap <= 1e-6, format!("objective {ours:.10} vs IRLS {oracle:.10}, |Δ| = {gap:.2e}"))
}

// ------------------------------------------------------------------ null path

fn criterion_null_kkt(monotone_ok: &mut bool) -> (bool, String) {
    let (data, _) = generate(&SynthSpec::cutpoint_scenario(404)).unwrap();
    let grid = fit_grid(&data, 20).unwrap();
    let design = encode(&data, &grid).unwrap();
    let y = data.target();
    let widths = design.widths();
    let weights = autobin::prox::default_weights(&widths);
    let lmax = lambda2_max(&design, y, &weights).unwrap();
    let params = PenaltyParams::new(0.0, 1.01 * lmax, weights.clone()).unwrap();
    let res = fit(&design, y, &params, &SolverConfig::default(), None).unwrap();
    *monotone_ok &= monotone(&res);

    let all_zero = res.beta.values().iter().all(|&b| b == 0.0);
    let grad = nll_gradient(&design, y, &res.beta).unwrap();
    let mut slack: f64 = grad.intercept().abs();
    for j in 0..widths.len() {
        let norm = grad.group(j).iter().map(|g| g * g).sum::<f64>().sqrt();
        slack = slack.max(norm - params.lambda2 * weights[j]);
    }
    let ybar = y.iter().map(|&v| f64::from(v)).sum::<f64>() / y.len() as f64;
    let b0_err = (res.beta.intercept() - (ybar / (1.0 - ybar)).ln()).abs();
    let pass = all_zero && slack <= 1e-6 && b0_err <= 1e-6;
    (
        pass,
        format!("groups zero: {all_zero}, KKT violation {slack:.2e}, |β₀ − logit(ȳ)| = {b0_err:.2e}"),
    )
}

// --------------------------------------------------- scenario: recovery, AUC

/// Share of `column` strictly below `c`. Recovered cuts are grid cuts, so
/// this is exactly their quantile level k/nbins.
fn ecdf(column: &[f64], c: f64) -> f64 {
    column.iter().filter(|&&x| x < c).count() as f64 / column.len() as f64
}

struct ScenarioTally {
    runs: usize,
    informative_kept: usize,
    noise_dropped: Vec<usize>,
    cuts_recovered: usize,
    fewer_bins: usize,
    auc_close: usize,
    worst_cut: Vec<f64>,
    monotone: bool,
}

fn scenario_runs(seeds: std::ops::Range<u64>) -> ScenarioTally {
    let nbins = 20;
    let mut t = ScenarioTally {
        runs: 0,
        informative_kept: 0,
        noise_dropped: Vec::new(),
        cuts_recovered: 0,
        fewer_bins: 0,
        auc_close: 0,
        worst_cut: Vec::new(),
        monotone: true,
    };
    for seed in seeds {
        let (data, truth) = generate(&SynthSpec::cutpoint_scenario(seed)).unwrap();
        let abm = AbmConfig {
            nbins,
            path: PathConfig::default(),
        };
        let baseline = [BaselineSpec {
            method: Method::EqualFrequency,
            nbins,
        }];
        let (table, path) = run_comparison_with_path(&data, &baseline, &abm, 5, seed).unwrap();
        t.runs += 1;
        t.monotone &= path.fit_log.iter().all(|f| f.trace_monotone) && monotone(&path.final_fit);

        let grid = fit_grid(&data, nbins).unwrap();
        let design = encode(&data, &grid).unwrap();
        let model = extract(&path.final_fit, &grid, &design.column_counts(), 1e-6).unwrap();
        let kept: Vec<usize> = model.variables.iter().map(|v| v.column).collect();
        if truth.informative.iter().all(|v| kept.contains(&v.index)) {
            t.informative_kept += 1;
        }
        let noise: Vec<usize> = (0..data.n_vars()).filter(|&j| !truth.is_informative(j)).collect();
        t.noise_dropped.resize(noise.len(), 0);
        for (slot, j) in noise.into_iter().enumerate() {
            if !kept.contains(&j) {
                t.noise_dropped[slot] += 1;
            }
        }
        let mut worst: f64 = 0.0;
        for v in &model.variables {
            let Some(tv) = truth.informative.iter().find(|t| t.index == v.column) else {
                continue;
            };
            let column = data.column(v.column);
            for &c in &v.cutpoints {
                // Features are uniform on (0, 1): a true cut is its own quantile.
                let level = ecdf(column, c);
                let d = tv
                    .cuts
                    .iter()
                    .map(|&tc| (level - tc).abs())
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(d);
            }
        }
        t.worst_cut.push(worst);
        // One grid cell is 1/20 in quantile space; the slack absorbs rounding.
        if worst <= 0.05 + 1e-9 {
            t.cuts_recovered += 1;
        }

        let ours = table.row("abm").unwrap();
        let ef = table.row("equal-frequency").unwrap();
        if ours.total_bins < data.n_vars() * nbins {
            t.fewer_bins += 1;
        }
        if ours.mean_auc >= ef.mean_auc - 0.005 {
            t.auc_close += 1;
        }
    }
    t
}

// ---------------------------------------------------------------- determinism

fn criterion_determinism() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        n: 1500,
        ..SynthSpec::cutpoint_scenario(808)
    };
    let (data, _): (Dataset, _) = generate(&spec).unwrap();
    let input = dir.path().join("train.csv");
    data.write_csv(&input, "y").unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let cfg = RunConfig {
            input: Some(input.clone()),
            target: Some("y".into()),
            seed: 7,
            out: Some(dir.path().join(format!("run{run}"))),
            ..RunConfig::default()
        };
        cmd_fit(&cfg).unwrap();
        let out = cfg.out.unwrap();
        outputs.push((
            fs::read(out.join("model.json")).unwrap(),
            fs::read(out.join("path.csv")).unwrap(),
        ));
    }
    let same_model = outputs[0].0 == outputs[1].0;
    let same_path = outputs[0].1 == outputs[1].1;
    (
        same_model && same_path,
        format!("model.json identical: {same_model}, path.csv identical: {same_path}"),
    )
}

#[test]
fn acceptance_criteria() {
    let mut outcomes = Vec::new();
    let mut monotone_ok = true;

    outcomes.push(run("1 prox oracle", Duration::from_secs(60), criterion_prox));
    outcomes.push(run("2 gradient check", Duration::from_secs(10), criterion_gradient));
    outcomes.push(run("3 unpenalized agreement", Duration::from_secs(5), || {
        criterion_unpenalized(&mut monotone_ok)
    }));
    outcomes.push(run("4 null-path KKT", Duration::from_secs(5), || {
        criterion_null_kkt(&mut monotone_ok)
    }));

    let start = Instant::now();
    let tally = scenario_runs(0..20);
    let elapsed = start.elapsed();
    let noise = &tally.noise_dropped;
    let recovery_pass = tally.informative_kept >= 18 && noise.iter().all(|&d| d >= 16) && tally.cuts_recovered >= 16;
    let mut worst = String::new();
    for w in &tally.worst_cut {
        let _ = write!(worst, "{w:.3} ");
    }
    outcomes.push(Outcome {
        name: "5 cutpoint recovery",
        pass: recovery_pass && elapsed <= Duration::from_secs(600),
        detail: format!(
            "informative kept {}/{}, noise dropped {:?}/{}, cuts within 0.05 in {}/{} (worst per run: {})",
            tally.informative_kept,
            tally.runs,
            noise,
            tally.runs,
            tally.cuts_recovered,
            tally.runs,
            worst.trim_end()
        ),
        elapsed,
    });
    outcomes.push(Outcome {
        name: "6 parsimony vs baselines",
        pass: tally.fewer_bins == tally.runs && tally.auc_close >= 16,
        detail: format!(
            "fewer bins {}/{}, AUC within 0.005 {}/{}",
            tally.fewer_bins, tally.runs, tally.auc_close, tally.runs
        ),
        elapsed,
    });
    monotone_ok &= tally.monotone;
    outcomes.push(Outcome {
        name: "7 monotone trace",
        pass: monotone_ok,
        detail: if monotone_ok {
            "every fit of criteria 3-6 nonincreasing".to_string()
        } else {
            "an objective trace increased".to_string()
        },
        elapsed: Duration::ZERO,
    });
    outcomes.push(run("8 determinism", Duration::from_secs(600), criterion_determinism));

    for o in &outcomes {
        println!(
            "[{}] criterion {} ({:.1}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

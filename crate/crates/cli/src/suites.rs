//! Property sweeps behind the `verify` command. Each sweep runs seeded random
//! trials and reports the worst slack or residual it saw; a property passes
//! when the worst case stays inside its tolerance.

use coderate::learn::{feature_map_gradient, init_feature_map, OptimizerConfig};
use coderate::matrix::{FeatureMatrix, Membership};
use coderate::rates::{
    coding_rate, grad_coding_rate, grad_rate_reduction, grad_segmented_rate,
    logdet_identity_plus_gram, rate_reduction, segmented_rate, RateParams,
};
use coderate::theory::{
    check_concavity_in_pi, check_rate_bounds, check_reduction_upper_bound, diagnose_optimum,
    optimal_singular_values, ScalarProgram,
};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// Outcome of one property sweep.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub trials: usize,
    /// Worst slack (for bounds: most negative allowed is `-tolerance`) or
    /// worst residual (for equalities: largest seen).
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Present when a violation was found: a short description of the
    /// offending instance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl PropertyResult {
    fn bound(name: &str, trials: usize, worst: f64, tol: f64, witness: Option<String>) -> Self {
        Self {
            name: name.into(),
            trials,
            worst,
            tolerance: tol,
            pass: worst >= -tol && witness.is_none(),
            witness,
        }
    }

    fn residual(name: &str, trials: usize, worst: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            trials,
            worst,
            tolerance: tol,
            pass: worst <= tol,
            witness: None,
        }
    }
}

fn random_matrix(d: usize, m: usize, rng: &mut ChaCha8Rng) -> FeatureMatrix<f64> {
    FeatureMatrix::new(DMatrix::from_fn(d, m, |_, _| StandardNormal.sample(rng))).unwrap()
}

fn random_hard(m: usize, k: usize, rng: &mut ChaCha8Rng) -> Membership<f64> {
    let mut labels: Vec<usize> = (0..m).map(|i| i % k).collect();
    for i in 0..m {
        let j = rng.random_range(i..m);
        labels.swap(i, j);
    }
    Membership::from_labels(&labels.into(), k).unwrap()
}

fn random_soft(m: usize, k: usize, rng: &mut ChaCha8Rng) -> Membership<f64> {
    let mut w = DMatrix::from_fn(m, k, |_, _| rng.random_range(1e-3..1.0));
    for mut row in w.row_iter_mut() {
        let s: f64 = row.iter().sum();
        row /= s;
    }
    Membership::new(w).unwrap()
}

/// Nonnegativity of the rate reduction, with the segmented-rate evaluation
/// injectable so tests can verify the sweep catches a broken implementation.
pub fn sweep_reduction_nonnegative(
    trials: usize,
    seed: u64,
    segmented: impl Fn(&FeatureMatrix<f64>, &Membership<f64>, &RateParams<f64>) -> f64,
) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for trial in 0..trials {
        let d = rng.random_range(1..=16);
        let m = rng.random_range(1..=32);
        let k = rng.random_range(1..=3.min(m));
        let z = random_matrix(d, m, &mut rng);
        let pi = if trial % 2 == 0 {
            random_hard(m, k, &mut rng)
        } else {
            random_soft(m, k, &mut rng)
        };
        let params = RateParams::bits(rng.random_range(0.1..2.0)).unwrap();
        let r = coding_rate(&z, &params).unwrap();
        let reduction = r - segmented(&z, &pi, &params);
        if reduction < worst {
            worst = reduction;
            if reduction < -1e-9 && witness.is_none() {
                witness = Some(format!(
                    "trial {trial}: d={d} m={m} k={k} reduction={reduction:.6e}"
                ));
            }
        }
    }
    PropertyResult::bound("reduction_nonnegative", trials, worst, 1e-9, witness)
}

/// Sandwich bounds on the coding rate and the reduction upper bound.
pub fn sweep_rate_bounds(trials: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let d = rng.random_range(1..=10);
        let parts: Vec<FeatureMatrix<f64>> = (0..rng.random_range(2..=4))
            .map(|_| random_matrix(d, rng.random_range(1..=8), &mut rng))
            .collect();
        let params = RateParams::bits(rng.random_range(0.1..2.0)).unwrap();
        let (lower, upper) = check_rate_bounds(&parts, &params).unwrap();
        worst = worst.min(lower.slack).min(upper.slack);

        let m = rng.random_range(4..=12);
        let k = rng.random_range(2..=3);
        let z = random_matrix(d, m, &mut rng);
        let pi = random_hard(m, k, &mut rng);
        let rep = check_reduction_upper_bound(&z, &pi, &params).unwrap();
        worst = worst.min(rep.slack);
    }
    PropertyResult::bound("rate_bounds", trials, worst, 1e-9, None)
}

/// Concavity of the segmented rate in the membership.
pub fn sweep_concavity(trials: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let d = rng.random_range(1..=8);
        let m = rng.random_range(2..=12);
        let k = rng.random_range(1..=3);
        let z = random_matrix(d, m, &mut rng);
        let a = random_soft(m, k, &mut rng);
        let b = random_soft(m, k, &mut rng);
        let alpha = rng.random_range(1e-3..1.0 - 1e-3);
        let params = RateParams::bits(rng.random_range(0.1..2.0)).unwrap();
        let rep = check_concavity_in_pi(&z, &a, &b, alpha, &params).unwrap();
        worst = worst.min(rep.slack);
    }
    PropertyResult::bound("segmented_rate_concavity", trials, worst, 1e-9, None)
}

/// Strict concavity of log-det on random SPD pairs: the Jensen gap must be
/// strictly positive.
pub fn sweep_logdet_strict_concavity(trials: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let n = rng.random_range(2..=8);
        let spd = |rng: &mut ChaCha8Rng| {
            let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
            &g * g.transpose() + DMatrix::identity(n, n) * 0.5
        };
        let a = spd(&mut rng);
        let b = spd(&mut rng);
        let alpha: f64 = rng.random_range(0.05..0.95);
        let logdet = |m: &DMatrix<f64>| -> f64 {
            m.clone()
                .cholesky()
                .expect("SPD by construction")
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| 2.0 * v.ln())
                .sum()
        };
        let mix = &a * (1.0 - alpha) + &b * alpha;
        let gap = logdet(&mix) - ((1.0 - alpha) * logdet(&a) + alpha * logdet(&b));
        worst = worst.min(gap);
    }
    // strictly positive margin required
    let pass = worst > 0.0;
    PropertyResult {
        name: "logdet_strict_concavity".into(),
        trials,
        worst,
        tolerance: 0.0,
        pass,
        witness: None,
    }
}

/// Commutativity of the log-det kernel and orthogonal invariance of the rate.
pub fn sweep_invariances(trials: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let d = rng.random_range(1..=20);
        let m = rng.random_range(1..=20);
        let z = random_matrix(d, m, &mut rng);
        let alpha = rng.random_range(0.05..4.0);
        let v1 = logdet_identity_plus_gram(&z, alpha).unwrap();
        let zt = FeatureMatrix::new(z.data().transpose()).unwrap();
        let v2 = logdet_identity_plus_gram(&zt, alpha).unwrap();
        worst = worst.max((v1 - v2).abs() / (1.0 + v1.abs()));

        let params = RateParams::bits(rng.random_range(0.1..2.0)).unwrap();
        let u = random_matrix(d, d, &mut rng).into_inner().qr().q();
        let v = random_matrix(m, m, &mut rng).into_inner().qr().q();
        let rotated = FeatureMatrix::new(&u * z.data() * v.transpose()).unwrap();
        let r0 = coding_rate(&z, &params).unwrap();
        let r1 = coding_rate(&rotated, &params).unwrap();
        worst = worst.max((r0 - r1).abs() / (1.0 + r0.abs()));
    }
    PropertyResult::residual("kernel_invariances", trials, worst, 1e-8)
}

/// Scale monotonicity of the reduction for multi-class memberships.
pub fn sweep_scale_monotonicity(trials: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let d = rng.random_range(2..=8);
        let m = rng.random_range(4..=12);
        let k = rng.random_range(2..=3);
        let z = random_matrix(d, m, &mut rng);
        let pi = random_hard(m, k, &mut rng);
        let params = RateParams::bits(rng.random_range(0.2..1.5)).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for step in 1..=100 {
            let c = step as f64 * 0.1;
            let scaled = FeatureMatrix::new(z.data() * c).unwrap();
            let red = rate_reduction(&scaled, &pi, &params).unwrap().reduction;
            worst = worst.min(red - prev);
            prev = red;
        }
    }
    PropertyResult::bound("scale_monotonicity", trials, worst, 1e-9, None)
}

/// The scalar-program solver never falls below random feasible points, and
/// returns the flat profile well inside the precision condition.
pub fn sweep_scalar_program(trials: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let r = rng.random_range(2..=4usize);
        let d = rng.random_range(r..32);
        let c = rng.random_range(1.0..20.0f64);
        let m = c as usize + rng.random_range(5..100);
        // stay well inside the precision condition; near its boundary the
        // two-family characterization itself breaks down
        let lim4 = (c / m as f64) * (d as f64 / r as f64).powi(2);
        let eps_sq = (rng.random_range(0.02..0.1) * lim4).sqrt();
        let prog = ScalarProgram::new(r, c, d, m, eps_sq).unwrap();
        let (sigmas, obj) = optimal_singular_values(&prog);

        // flat profile expected in this regime
        let flat = (c / r as f64).sqrt();
        let dev = sigmas
            .iter()
            .map(|s| (s - flat).abs() / flat)
            .fold(0.0, f64::max);
        worst = worst.min(1e-6 - dev);

        // random feasible points never beat the solver
        for _ in 0..200 {
            let mut cuts: Vec<f64> = (0..r - 1).map(|_| rng.random::<f64>()).collect();
            cuts.push(0.0);
            cuts.push(1.0);
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let v: f64 = cuts
                .windows(2)
                .map(|w| prog.f(c * (w[1] - w[0])))
                .sum();
            worst = worst.min(obj - v);
        }
    }
    PropertyResult::bound("scalar_program_optimality", trials, worst, 1e-9, None)
}

/// Rank estimates and cross-class coherence on constructed optima.
pub fn sweep_diagnostics(trials: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        // two orthonormal coordinate-block classes: cosine must vanish and
        // ranks must match the block sizes
        let d = rng.random_range(4..=12);
        let r = d / 2;
        let mut data = DMatrix::zeros(d, 2 * r);
        for i in 0..2 * r {
            data[(i.min(d - 1), i)] = 1.0;
        }
        let z = FeatureMatrix::new(data).unwrap();
        let labels: Vec<usize> = (0..2 * r).map(|i| usize::from(i >= r)).collect();
        let pi = Membership::from_labels(&labels.into(), 2).unwrap();
        let params = RateParams::bits(0.5).unwrap();
        let diag = diagnose_optimum(&z, &pi, &params).unwrap();
        worst = worst.max(diag.max_interclass_cosine);
        if diag.per_class_rank_estimate != vec![r, r] {
            worst = worst.max(1.0);
        }
    }
    PropertyResult::residual("optimality_diagnostics", trials, worst, 1e-9)
}

/// Analytic gradients against central finite differences.
pub fn sweep_gradients(trials: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let fd = |z: &FeatureMatrix<f64>, f: &dyn Fn(&FeatureMatrix<f64>) -> f64| -> DMatrix<f64> {
        let h = 1e-5;
        DMatrix::from_fn(z.dim(), z.len(), |r, c| {
            let mut zp = z.data().clone();
            zp[(r, c)] += h;
            let mut zm = z.data().clone();
            zm[(r, c)] -= h;
            (f(&FeatureMatrix::new(zp).unwrap()) - f(&FeatureMatrix::new(zm).unwrap()))
                / (2.0 * h)
        })
    };
    let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> f64 {
        (a - b).amax() / a.amax().max(b.amax()).max(1e-12)
    };
    for trial in 0..trials {
        let d = rng.random_range(2..=10);
        let m = rng.random_range(2..=10);
        let k = rng.random_range(1..=3.min(m));
        let z = random_matrix(d, m, &mut rng);
        let pi = if trial % 2 == 0 {
            random_hard(m, k, &mut rng)
        } else {
            random_soft(m, k, &mut rng)
        };
        let params = RateParams::bits(rng.random_range(0.2..1.5)).unwrap();
        worst = worst.max(rel(
            &grad_coding_rate(&z, &params).unwrap(),
            &fd(&z, &|z| coding_rate(z, &params).unwrap()),
        ));
        worst = worst.max(rel(
            &grad_segmented_rate(&z, &pi, &params).unwrap(),
            &fd(&z, &|z| segmented_rate(z, &pi, &params).unwrap().0),
        ));
        worst = worst.max(rel(
            &grad_rate_reduction(&z, &pi, &params).unwrap(),
            &fd(&z, &|z| rate_reduction(z, &pi, &params).unwrap().reduction),
        ));
    }
    PropertyResult::residual("matrix_gradients", trials, worst, 1e-5)
}

/// Feature-map parameter gradient against central finite differences.
pub fn sweep_network_gradient(trials: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for trial in 0..trials.min(10) {
        let widths = [3usize, rng.random_range(3..=6), rng.random_range(2..=4)];
        let params = init_feature_map::<f64>(&widths, seed.wrapping_add(trial as u64)).unwrap();
        let x = random_matrix(3, 8, &mut rng);
        let pi = random_hard(8, 2, &mut rng);
        let rp = RateParams::bits(0.5).unwrap();
        let cfg = OptimizerConfig::default();
        let (_, gw, gb) = feature_map_gradient(&params, &x, &pi, &rp, &cfg).unwrap();
        let eval = |p: &coderate::FeatureMapParams64| {
            let z = coderate::learn::feature_map_forward(p, &x).unwrap();
            rate_reduction(&z, &pi, &rp).unwrap().reduction
        };
        let h = 1e-5;
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for li in 0..2 {
            for r in 0..widths[li + 1] {
                for c in 0..widths[li] {
                    let mut plus = params.clone();
                    plus.weights_mut()[li][(r, c)] += h;
                    let mut minus = params.clone();
                    minus.weights_mut()[li][(r, c)] -= h;
                    let v = (eval(&plus) - eval(&minus)) / (2.0 * h);
                    err = err.max((v - gw[li][(r, c)]).abs());
                    scale = scale.max(v.abs());
                }
                let mut plus = params.clone();
                plus.biases_mut()[li][r] += h;
                let mut minus = params.clone();
                minus.biases_mut()[li][r] -= h;
                let v = (eval(&plus) - eval(&minus)) / (2.0 * h);
                err = err.max((v - gb[li][r]).abs());
                scale = scale.max(v.abs());
            }
        }
        worst = worst.max(err / scale.max(1e-12));
    }
    PropertyResult::residual("network_gradient", trials.min(10), worst, 1e-4)
}

/// Metric implementations against small brute-force oracles.
pub fn sweep_metrics(trials: usize, seed: u64) -> PropertyResult {
    use coderate::metrics::{acc, ari, nmi, optimal_assignment};
    use coderate::LabelVector;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;

    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..k {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }

    for _ in 0..trials {
        let k = rng.random_range(1..=4usize);
        let m = rng.random_range(2..24usize);
        let y: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
        let c: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
        let yl = LabelVector::from(y.clone());
        let cl = LabelVector::from(c.clone());

        // identical partitions score 1 everywhere
        worst = worst.max((nmi(&yl, &yl).unwrap() - 1.0).abs());
        worst = worst.max((acc(&yl, &yl, k).unwrap().0 - 1.0).abs());
        worst = worst.max((ari(&yl, &yl).unwrap() - 1.0).abs());

        // ACC vs permutation brute force
        let (got, _) = acc(&yl, &cl, k).unwrap();
        let mut best = 0usize;
        for perm in permutations(k) {
            let hits = y.iter().zip(&c).filter(|&(&a, &b)| a == perm[b]).count();
            best = best.max(hits);
        }
        worst = worst.max((got - best as f64 / m as f64).abs());

        // assignment vs brute force on 4x4
        let cost = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-3.0..3.0));
        let asg = optimal_assignment(&cost).unwrap();
        let total: f64 = asg.iter().enumerate().map(|(r, &cc)| cost[(r, cc)]).sum();
        let mut bestc = f64::INFINITY;
        for perm in permutations(4) {
            bestc = bestc.min(
                perm.iter()
                    .enumerate()
                    .map(|(r, &cc)| cost[(r, cc)])
                    .sum::<f64>(),
            );
        }
        worst = worst.max(total - bestc);
    }
    PropertyResult::residual("metric_oracles", trials, worst, 1e-9)
}

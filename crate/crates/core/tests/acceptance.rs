//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! A1 reproduces the simulated-data reference table; A2-A6 sweep the bound,
//! invariance, gradient, concavity and monotonicity properties; A7-A8 check
//! the optimizer against the scalar-program oracle; A9 checks the metrics
//! against brute force; A10-A11 run the end-to-end trainer and the rescaled
//! objective's consistency.

use coderate::learn::{
    feature_map_gradient, init_feature_map, optimize_representation, train_feature_map,
    Normalization, OptimizerConfig,
};
use coderate::matrix::{FeatureMatrix, LabelVector, Membership};
use coderate::metrics::{acc, ari, fit_class_models, nearest_subspace_predict, nmi, optimal_assignment};
use coderate::rates::{
    coding_rate, grad_coding_rate, grad_rate_reduction, grad_segmented_rate,
    logdet_identity_plus_gram, rate_reduction, scaled_rate, segmented_rate, LogBase, RateParams,
};
use coderate::synth::{
    corrupt_labels, gen_gaussian, gen_subspace_mixture, gen_two_circles, membership_from_labels,
    SubspaceMixtureSpec,
};
use coderate::theory::{
    check_concavity_in_pi, check_rate_bounds, check_reduction_upper_bound, diagnose_optimum,
    optimal_singular_values, ScalarProgram,
};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_matrix(d: usize, m: usize, rng: &mut ChaCha8Rng) -> FeatureMatrix<f64> {
    FeatureMatrix::new(DMatrix::from_fn(d, m, |_, _| StandardNormal.sample(rng))).unwrap()
}

fn random_hard_membership(m: usize, k: usize, rng: &mut ChaCha8Rng) -> Membership<f64> {
    // every class nonempty
    let mut labels: Vec<usize> = (0..m).map(|i| i % k).collect();
    for i in 0..m {
        let j = rng.random_range(i..m);
        labels.swap(i, j);
    }
    Membership::from_labels(&labels.into(), k).unwrap()
}

fn random_soft_membership(m: usize, k: usize, rng: &mut ChaCha8Rng) -> Membership<f64> {
    let mut w = DMatrix::from_fn(m, k, |_, _| rng.random_range(1e-3..1.0));
    for mut row in w.row_iter_mut() {
        let s: f64 = row.iter().sum();
        row /= s;
    }
    Membership::new(w).unwrap()
}

fn rel_err(x: f64, target: f64) -> f64 {
    (x - target).abs() / target.abs()
}

/// 5-seed mean of (R, Rc, DeltaR) for one generator row.
fn row_means(
    d: usize,
    d_j: Option<usize>,
    orthogonal: bool,
    params: &RateParams<f64>,
) -> (f64, f64, f64) {
    let (mut r, mut rc) = (0.0, 0.0);
    let seeds = 5u64;
    for seed in 0..seeds {
        let (z, labels) = match d_j {
            None => gen_gaussian::<f64>(d, 1000, 10, seed).unwrap(),
            Some(d_j) => gen_subspace_mixture::<f64>(&SubspaceMixtureSpec {
                k: 10,
                d,
                d_j,
                samples_per_class: 100,
                orthogonal,
                ambient_is_input: false,
                seed,
            })
            .unwrap(),
        };
        let pi = membership_from_labels::<f64>(&labels, 10).unwrap();
        let rep = rate_reduction(&z, &pi, params).unwrap();
        r += rep.rate_whole / seeds as f64;
        rc += rep.rate_segmented / seeds as f64;
    }
    (r, rc, r - rc)
}

#[test]
fn a1_simulated_data_table() {
    // Calibration: the table's distortion and log base are not stated, so they
    // are recovered by gridding candidate conventions against the random
    // Gaussian d=512 row. Exactly one convention must land within 2% on all
    // three reported values (5-seed means).
    let gauss_targets = (552.70, 193.29, 360.41);
    let eps_grid = [0.05, 0.1, 0.2, 0.25, 0.5, 1.0];
    let bases = [LogBase::Bits, LogBase::Nats];
    let mut matches = Vec::new();
    for &eps_sq in &eps_grid {
        for &base in &bases {
            let params = RateParams::new(eps_sq, base).unwrap();
            let (r, rc, dr) = row_means(512, None, false, &params);
            let worst = rel_err(r, gauss_targets.0)
                .max(rel_err(rc, gauss_targets.1))
                .max(rel_err(dr, gauss_targets.2));
            println!(
                "[A1] calibration eps_sq={eps_sq} base={base:?}: R={r:.2} Rc={rc:.2} dR={dr:.2} worst-rel={worst:.4}"
            );
            if worst < 0.02 {
                matches.push((eps_sq, base));
            }
        }
    }
    assert_eq!(
        matches.len(),
        1,
        "expected exactly one calibrated convention, found {matches:?}"
    );
    let (eps_sq, base) = matches[0];
    println!("[A1] calibrated convention: eps_sq={eps_sq}, base={base:?}");
    let params = RateParams::new(eps_sq, base).unwrap();

    // With the convention fixed, every orthogonal-subspace row of the d=512
    // block and the d=128 nonorthogonal rows must reproduce within 3%.
    let rows: &[(usize, usize, bool, f64)] = &[
        (512, 50, true, 437.17),
        (512, 40, true, 394.36),
        (512, 30, true, 338.24),
        (512, 20, true, 264.04),
        (512, 10, true, 164.49),
        (512, 1, true, 26.91),
        (128, 50, false, 70.29),
        (128, 12, false, 74.21),
    ];
    let mut failures = Vec::new();
    for &(d, d_j, orthogonal, target) in rows {
        let (r, rc, dr) = row_means(d, Some(d_j), orthogonal, &params);
        if d == 512 && d_j == 50 {
            // this row's whole and segmented rates are pinned as well
            assert!(rel_err(r, 545.63) < 0.02, "d_j=50 whole rate {r}");
            assert!(rel_err(rc, 108.46) < 0.02, "d_j=50 segmented rate {rc}");
        }
        let rel = rel_err(dr, target);
        let ok = rel < 0.03;
        println!(
            "[A1] d={d} d_j={d_j} orthogonal={orthogonal}: dR={dr:.2} target={target} rel={rel:.4} {}",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failures.push(format!(
                "d={d} d_j={d_j} orthogonal={orthogonal}: dR={dr:.2} vs {target} ({:.1}% off)",
                rel * 100.0
            ));
        }
    }
    // concentration: single-seed whole rates at m = 1000 differ by < 1%
    let single = |seed: u64| {
        let (z, _) = gen_gaussian::<f64>(512, 1000, 10, seed).unwrap();
        coding_rate(&z, &params).unwrap()
    };
    let (r0, r1) = (single(0), single(1));
    assert!(rel_err(r0, r1) < 0.01, "seed-to-seed spread {r0} vs {r1}");

    assert!(
        failures.is_empty(),
        "table rows out of tolerance: {failures:#?}"
    );
    println!("[A1] simulated-data table reproduction: PASS");
}

#[test]
fn a2_reduction_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA2);
    let mut worst = f64::INFINITY;
    for trial in 0..1000 {
        let d = rng.random_range(1..=32);
        let m = rng.random_range(1..=64);
        let k = rng.random_range(1..=4.min(m));
        let z = random_matrix(d, m, &mut rng);
        let pi = if trial % 2 == 0 {
            random_hard_membership(m, k, &mut rng)
        } else {
            random_soft_membership(m, k, &mut rng)
        };
        let params = RateParams::bits(rng.random_range(0.05..2.0)).unwrap();
        let red = rate_reduction(&z, &pi, &params).unwrap().reduction;
        worst = worst.min(red);
        assert!(red >= -1e-9, "negative reduction {red} at trial {trial}");
    }
    println!("[A2] reduction nonnegative on 1000 instances (worst {worst:.3e}): PASS");
}

#[test]
fn a3_bound_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA3);
    let mut worst: f64 = f64::INFINITY;
    for _ in 0..500 {
        let d = rng.random_range(1..=10);
        let parts: Vec<FeatureMatrix<f64>> = (0..rng.random_range(2..=4))
            .map(|_| random_matrix(d, rng.random_range(1..=8), &mut rng))
            .collect();
        let params = RateParams::bits(rng.random_range(0.1..2.0)).unwrap();
        let (lower, upper) = check_rate_bounds(&parts, &params).unwrap();
        worst = worst.min(lower.slack).min(upper.slack);
        assert!(lower.slack >= -1e-9 && upper.slack >= -1e-9);

        let m = rng.random_range(4..=12);
        let k = rng.random_range(2..=3);
        let z = random_matrix(d, m, &mut rng);
        let pi = random_hard_membership(m, k, &mut rng);
        let rep = check_reduction_upper_bound(&z, &pi, &params).unwrap();
        worst = worst.min(rep.slack);
        assert!(rep.slack >= -1e-9);
    }

    // equality constructions
    let params = RateParams::bits(0.5).unwrap();
    let z = random_matrix(5, 7, &mut rng);
    let (lower, _) = check_rate_bounds(&[z.clone(), z], &params).unwrap();
    assert!(lower.equality_expected && lower.slack.abs() < 1e-6);

    let block = |lo: usize, rng: &mut ChaCha8Rng| {
        FeatureMatrix::new(DMatrix::from_fn(8, 5, |r, _| {
            if r >= lo && r < lo + 4 {
                StandardNormal.sample(rng)
            } else {
                0.0
            }
        }))
        .unwrap()
    };
    let a = block(0, &mut rng);
    let b = block(4, &mut rng);
    let (_, upper) = check_rate_bounds(&[a.clone(), b.clone()], &params).unwrap();
    assert!(upper.equality_expected && upper.slack.abs() < 1e-6);
    let z = a.concat(&b).unwrap();
    let labels: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
    let pi = Membership::from_labels(&labels.into(), 2).unwrap();
    let rep = check_reduction_upper_bound(&z, &pi, &params).unwrap();
    assert!(rep.equality_expected && rep.slack.abs() < 1e-6);
    println!("[A3] bound suite, 500 instances + equality constructions (worst slack {worst:.3e}): PASS");
}

#[test]
fn a4_invariance_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA4);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let d = rng.random_range(1..=24);
        let m = rng.random_range(1..=24);
        let z = random_matrix(d, m, &mut rng);
        let alpha = rng.random_range(0.05..4.0);
        // commutativity: evaluate through both Gram sides
        let via_z = logdet_identity_plus_gram(&z, alpha).unwrap();
        let zt = FeatureMatrix::new(z.data().transpose()).unwrap();
        let via_zt = logdet_identity_plus_gram(&zt, alpha).unwrap();
        let resid = (via_z - via_zt).abs() / (1.0 + via_z.abs());
        worst = worst.max(resid);
        assert!(resid < 1e-8, "commutativity residual {resid}");

        // orthogonal invariance
        let params = RateParams::bits(rng.random_range(0.1..2.0)).unwrap();
        let u = random_matrix(d, d, &mut rng).into_inner().qr().q();
        let v = random_matrix(m, m, &mut rng).into_inner().qr().q();
        let rotated = FeatureMatrix::new(&u * z.data() * v.transpose()).unwrap();
        let r0 = coding_rate(&z, &params).unwrap();
        let r1 = coding_rate(&rotated, &params).unwrap();
        let resid = (r0 - r1).abs() / (1.0 + r0.abs());
        worst = worst.max(resid);
        assert!(resid < 1e-8, "invariance residual {resid}");
    }
    println!("[A4] commutativity and orthogonal invariance on 200 instances (worst {worst:.3e}): PASS");
}

fn finite_diff(z: &FeatureMatrix<f64>, f: &dyn Fn(&FeatureMatrix<f64>) -> f64) -> DMatrix<f64> {
    let h = 1e-5;
    let (d, m) = (z.dim(), z.len());
    DMatrix::from_fn(d, m, |r, c| {
        let mut zp = z.data().clone();
        zp[(r, c)] += h;
        let mut zm = z.data().clone();
        zm[(r, c)] -= h;
        (f(&FeatureMatrix::new(zp).unwrap()) - f(&FeatureMatrix::new(zm).unwrap())) / (2.0 * h)
    })
}

fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1e-12)
}

#[test]
fn a5_gradient_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA5);
    let mut worst: f64 = 0.0;
    for trial in 0..12 {
        let d = rng.random_range(2..=12);
        let m = rng.random_range(2..=12);
        let k = rng.random_range(1..=3.min(m));
        let z = random_matrix(d, m, &mut rng);
        let pi = if trial % 2 == 0 {
            random_hard_membership(m, k, &mut rng)
        } else {
            random_soft_membership(m, k, &mut rng)
        };
        let params = RateParams::bits(rng.random_range(0.2..1.5)).unwrap();

        let e = max_rel(
            &grad_coding_rate(&z, &params).unwrap(),
            &finite_diff(&z, &|z| coding_rate(z, &params).unwrap()),
        );
        worst = worst.max(e);
        let e = max_rel(
            &grad_segmented_rate(&z, &pi, &params).unwrap(),
            &finite_diff(&z, &|z| segmented_rate(z, &pi, &params).unwrap().0),
        );
        worst = worst.max(e);
        let e = max_rel(
            &grad_rate_reduction(&z, &pi, &params).unwrap(),
            &finite_diff(&z, &|z| rate_reduction(z, &pi, &params).unwrap().reduction),
        );
        worst = worst.max(e);
    }
    assert!(worst < 1e-5, "matrix gradient error {worst}");

    // full feature-map parameter gradient
    let widths = [3usize, 5, 4];
    let params = init_feature_map::<f64>(&widths, 0xA5).unwrap();
    let x = random_matrix(3, 8, &mut rng);
    let pi = random_hard_membership(8, 2, &mut rng);
    let rp = RateParams::bits(0.5).unwrap();
    let cfg = OptimizerConfig::default();
    let (_, gw, gb) = feature_map_gradient(&params, &x, &pi, &rp, &cfg).unwrap();
    let eval = |p: &coderate::FeatureMapParams64| {
        let z = coderate::learn::feature_map_forward(p, &x).unwrap();
        rate_reduction(&z, &pi, &rp).unwrap().reduction
    };
    let h = 1e-5;
    let mut net_worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for li in 0..2 {
        for r in 0..widths[li + 1] {
            for c in 0..widths[li] {
                let mut plus = params.clone();
                plus.weights_mut()[li][(r, c)] += h;
                let mut minus = params.clone();
                minus.weights_mut()[li][(r, c)] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                net_worst = net_worst.max((fd - gw[li][(r, c)]).abs());
                scale = scale.max(fd.abs());
            }
            let mut plus = params.clone();
            plus.biases_mut()[li][r] += h;
            let mut minus = params.clone();
            minus.biases_mut()[li][r] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            net_worst = net_worst.max((fd - gb[li][r]).abs());
            scale = scale.max(fd.abs());
        }
    }
    let net_rel = net_worst / scale.max(1e-12);
    assert!(net_rel < 1e-4, "network gradient error {net_rel}");
    println!("[A5] gradient checks (matrix worst {worst:.2e}, network worst {net_rel:.2e}): PASS");
}

#[test]
fn a6_concavity_and_scale_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA6);
    let mut worst = f64::INFINITY;
    for _ in 0..500 {
        let d = rng.random_range(1..=8);
        let m = rng.random_range(2..=12);
        let k = rng.random_range(1..=3);
        let z = random_matrix(d, m, &mut rng);
        let a = random_soft_membership(m, k, &mut rng);
        let b = random_soft_membership(m, k, &mut rng);
        let alpha = rng.random_range(1e-3..1.0 - 1e-3);
        let params = RateParams::bits(rng.random_range(0.1..2.0)).unwrap();
        let rep = check_concavity_in_pi(&z, &a, &b, alpha, &params).unwrap();
        worst = worst.min(rep.slack);
        assert!(rep.slack >= -1e-9, "concavity slack {}", rep.slack);
    }

    for _ in 0..100 {
        let d = rng.random_range(2..=10);
        let m = rng.random_range(4..=16);
        let k = rng.random_range(2..=3);
        let z = random_matrix(d, m, &mut rng);
        let pi = random_hard_membership(m, k, &mut rng);
        let params = RateParams::bits(rng.random_range(0.2..1.5)).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for step in 1..=100 {
            let c = step as f64 * 0.1;
            let scaled = FeatureMatrix::new(z.data() * c).unwrap();
            let red = rate_reduction(&scaled, &pi, &params).unwrap().reduction;
            assert!(
                red >= prev - 1e-9,
                "reduction decreased at scale {c}: {red} < {prev}"
            );
            prev = red;
        }
    }
    println!("[A6] concavity (worst slack {worst:.3e}) and scale monotonicity: PASS");
}

#[test]
fn a7_optimal_structure_emerges() {
    let d = 16;
    let k = 2;
    let per_class = 4;
    let m = k * per_class;
    let params = RateParams::nats(0.5).unwrap();
    let labels: Vec<usize> = (0..m).map(|i| i / per_class).collect();
    let pi = Membership::from_labels(&labels.into(), k).unwrap();

    // oracle: per-class scalar program with the emergent rank min(d, m_j)
    let prog = ScalarProgram::new(per_class, per_class as f64, d, m, 0.5).unwrap();
    assert!(prog.diversity_condition());
    let (oracle_sigmas, oracle_obj) = optimal_singular_values(&prog);
    let oracle_reduction = k as f64 * oracle_obj / (2.0 * m as f64);

    let cfg = OptimizerConfig {
        step_size: 0.1,
        max_iters: 20_000,
        tol: 1e-12,
        normalization: Normalization::UnitSphere,
        ..OptimizerConfig::default()
    };
    let mut worst_cos: f64 = 0.0;
    let mut worst_sigma: f64 = 0.0;
    let mut worst_obj: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z0 = random_matrix(d, m, &mut rng);
        let (z, trace) = optimize_representation(&z0, &pi, &params, &cfg).unwrap();
        let diag = diagnose_optimum(&z, &pi, &params).unwrap();
        worst_cos = worst_cos.max(diag.max_interclass_cosine);
        for sv in &diag.per_class_singular_values {
            for (got, want) in sv.iter().zip(&oracle_sigmas) {
                worst_sigma = worst_sigma.max((got - want).abs() / want);
            }
        }
        let achieved = trace.final_record().unwrap().reduction;
        worst_obj = worst_obj.max((achieved - oracle_reduction).abs() / oracle_reduction);
    }
    assert!(worst_cos < 1e-2, "inter-class cosine {worst_cos}");
    assert!(worst_sigma < 0.01, "sigma deviation {worst_sigma}");
    assert!(worst_obj < 0.005, "objective deviation {worst_obj}");
    println!(
        "[A7] optimal structure over 20 starts (cos {worst_cos:.2e}, sigma {worst_sigma:.2e}, obj {worst_obj:.2e}): PASS"
    );
}

#[test]
fn a8_scalar_program_vs_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA8);
    let mut worst_gap = f64::NEG_INFINITY;
    for trial in 0..50 {
        let r = if trial % 2 == 0 { 2 } else { 3 };
        let d = rng.random_range(r..48);
        let c = rng.random_range(1.0..30.0f64);
        let m = c as usize + rng.random_range(5..150);
        // sample the distortion well inside the precision condition, where
        // the two-family characterization applies
        let lim4 = (c / m as f64) * (d as f64 / r as f64).powi(2);
        let eps_sq = (rng.random_range(0.02..0.1) * lim4).sqrt();
        let prog = ScalarProgram::new(r, c, d, m, eps_sq).unwrap();
        let (_, obj) = optimal_singular_values(&prog);

        // 1e-4-step simplex grid via a precomputed value table
        let n = 10_000usize;
        let step = c / n as f64;
        let table: Vec<f64> = (0..=n).map(|i| prog.f(i as f64 * step)).collect();
        let grid_max = if r == 2 {
            (0..=n)
                .map(|i| table[i] + table[n - i])
                .fold(f64::NEG_INFINITY, f64::max)
        } else {
            let mut best = f64::NEG_INFINITY;
            for i in 0..=n {
                let ti = table[i];
                for j in 0..=(n - i) {
                    let v = ti + table[j] + table[n - i - j];
                    if v > best {
                        best = v;
                    }
                }
            }
            best
        };
        let gap = grid_max - obj;
        worst_gap = worst_gap.max(gap);
        assert!(
            obj >= grid_max - 1e-6,
            "solver {obj} below grid {grid_max} (r={r}, trial {trial})"
        );
    }
    println!("[A8] scalar program vs 1e-4 grid on 50 programs (worst gap {worst_gap:.2e}): PASS");
}

#[test]
fn a9_metrics_against_brute_force() {
    let lv = |v: Vec<usize>| LabelVector::from(v);
    // identical partitions
    let y = lv(vec![0, 1, 2, 0, 1, 2]);
    assert_eq!(nmi(&y, &y).unwrap(), 1.0);
    assert_eq!(acc(&y, &y, 3).unwrap().0, 1.0);
    assert_eq!(ari(&y, &y).unwrap(), 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(0xA9);

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

    // ACC equals the k!-brute-force on 200 random cases
    for _ in 0..200 {
        let k = rng.random_range(1..=5usize);
        let m = rng.random_range(1..40usize);
        let y: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
        let c: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
        let (got, _) = acc(&lv(y.clone()), &lv(c.clone()), k).unwrap();
        let mut best = 0usize;
        for perm in permutations(k) {
            let hits = y
                .iter()
                .zip(&c)
                .filter(|&(&yi, &ci)| yi == perm[ci])
                .count();
            best = best.max(hits);
        }
        assert!((got - best as f64 / m as f64).abs() < 1e-12);
    }

    // ARI equals the O(m^2) pairwise oracle on 100 cases
    for _ in 0..100 {
        let m = rng.random_range(2..50usize);
        let k = rng.random_range(1..5usize);
        let y: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
        let c: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
        let got = ari(&lv(y.clone()), &lv(c.clone())).unwrap();
        let (mut n11, mut n10, mut n01, mut n00) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..m {
            for j in (i + 1)..m {
                match (y[i] == y[j], c[i] == c[j]) {
                    (true, true) => n11 += 1.0,
                    (true, false) => n10 += 1.0,
                    (false, true) => n01 += 1.0,
                    (false, false) => n00 += 1.0,
                }
            }
        }
        let total = n11 + n10 + n01 + n00;
        let expected = (n11 + n10) * (n11 + n01) / total;
        let maxi = 0.5 * ((n11 + n10) + (n11 + n01));
        let oracle = if (maxi - expected).abs() < 1e-12 {
            if (n11 - expected).abs() < 1e-12 {
                1.0
            } else {
                0.0
            }
        } else {
            (n11 - expected) / (maxi - expected)
        };
        assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
    }

    // assignment equals brute force on 6x6 matrices
    for _ in 0..50 {
        let cost = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-5.0..5.0));
        let got = optimal_assignment(&cost).unwrap();
        let got_total: f64 = got.iter().enumerate().map(|(r, &c)| cost[(r, c)]).sum();
        let mut best = f64::INFINITY;
        for perm in permutations(6) {
            let t: f64 = perm.iter().enumerate().map(|(r, &c)| cost[(r, c)]).sum();
            best = best.min(t);
        }
        assert!((got_total - best).abs() < 1e-9);
    }
    println!("[A9] metrics vs brute force (ACC 200, ARI 100, assignment 50): PASS");
}

#[test]
fn a10_end_to_end_feature_learning() {
    let params = RateParams::nats(0.5).unwrap();
    let (x, y) = gen_two_circles::<f64>(100, 0.5, 1.0, 0.02, 7).unwrap();
    let pi = Membership::from_labels(&y, 2).unwrap();
    let map0 = init_feature_map::<f64>(&[3, 32, 8], 1007).unwrap();
    let cfg = OptimizerConfig {
        step_size: 0.01,
        max_iters: 6000,
        tol: 1e-11,
        ..OptimizerConfig::default()
    };
    let (trained, trace) = train_feature_map(&map0, &x, &pi, &params, &cfg).unwrap();
    assert!(trace.is_monotone(1e-12), "trace not monotone");
    let z = coderate::learn::feature_map_forward(&trained, &x).unwrap();
    let models = fit_class_models(&z, &y, 4, 2).unwrap();
    let hits = (0..z.len())
        .filter(|&i| {
            nearest_subspace_predict(&models, &z.column(i)).unwrap() == y.as_slice()[i]
        })
        .count();
    let train_acc = hits as f64 / z.len() as f64;
    assert!(train_acc >= 0.95, "train accuracy {train_acc}");

    // comparative run with corrupted labels: compression is blocked, so the
    // final segmented rate stays strictly higher
    let yc = corrupt_labels(&y, 0.3, 2, 99).unwrap();
    let pic = Membership::from_labels(&yc, 2).unwrap();
    let (_, trace_corr) = train_feature_map(&map0, &x, &pic, &params, &cfg).unwrap();
    let rc_clean = trace.final_record().unwrap().rate_segmented;
    let rc_corr = trace_corr.final_record().unwrap().rate_segmented;
    assert!(
        rc_corr > rc_clean,
        "corrupted-label Rc {rc_corr} not above clean {rc_clean}"
    );
    println!(
        "[A10] two-circles accuracy {train_acc:.3}, Rc clean {rc_clean:.3} < corrupted {rc_corr:.3}: PASS"
    );
}

#[test]
fn a11_rescaled_rate_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11);
    for _ in 0..50 {
        let z = random_matrix(rng.random_range(1..8), rng.random_range(1..8), &mut rng);
        let params = RateParams::bits(rng.random_range(0.1..2.0)).unwrap();
        // exact equality, not approximate
        assert_eq!(
            scaled_rate(&z, &params, 1.0, 1.0).unwrap(),
            coding_rate(&z, &params).unwrap()
        );
    }

    let (x, y) = gen_two_circles::<f64>(20, 0.5, 1.0, 0.05, 21).unwrap();
    let pi = Membership::from_labels(&y, 2).unwrap();
    let rp = RateParams::bits(0.5).unwrap();
    let map0 = init_feature_map::<f64>(&[3, 8, 4], 2021).unwrap();
    let plain = OptimizerConfig {
        max_iters: 40,
        ..OptimizerConfig::default()
    };
    let ctrl = OptimizerConfig {
        use_ctrl: true,
        gamma1: 1.0,
        gamma2: 1.0,
        ..plain
    };
    let (tp, trp) = train_feature_map(&map0, &x, &pi, &rp, &plain).unwrap();
    let (tc, trc) = train_feature_map(&map0, &x, &pi, &rp, &ctrl).unwrap();
    assert_eq!(tp, tc, "trained parameters differ");
    assert_eq!(trp.records.len(), trc.records.len());
    for (a, b) in trp.records.iter().zip(&trc.records) {
        assert_eq!(a.rate_whole, b.rate_whole);
        assert_eq!(a.rate_segmented, b.rate_segmented);
        assert_eq!(a.reduction, b.reduction);
        assert_eq!(a.grad_norm, b.grad_norm);
    }
    println!("[A11] rescaled rate at gamma=1 identical to the plain objective: PASS");
}

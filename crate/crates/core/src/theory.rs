//! Executable checks for the analytic properties of the rate objectives:
//! the coding-rate sandwich bounds, the rate-reduction upper bound, concavity
//! in the membership, and the scalar singular-value program whose solution
//! describes optimal per-class spectra.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, Membership};
use crate::rates::{rate_reduction, segmented_rate, RateParams};
use crate::real::{real, Real};

/// Tolerance under which a bound is considered violated.
pub const BOUND_TOL: f64 = 1e-9;
/// Tolerance for detecting that an analytic equality condition is met.
pub const EQUALITY_TOL: f64 = 1e-6;
/// Relative threshold separating numerical zeros from structure in a spectrum.
pub const RANK_REL_TOL: f64 = 1e-6;

/// One evaluated inequality: `lhs <= rhs` with `slack = rhs - lhs`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport<T: Real> {
    pub lhs: T,
    pub rhs: T,
    pub slack: T,
    /// Whether the analytic equality condition is met by the inputs.
    pub equality_expected: bool,
    pub tolerance: T,
}

impl<T: Real> BoundReport<T> {
    fn new(lhs: T, rhs: T, equality_expected: bool) -> Self {
        Self {
            lhs,
            rhs,
            slack: rhs - lhs,
            equality_expected,
            tolerance: real(BOUND_TOL),
        }
    }

    /// The inequality holds up to the tolerance.
    pub fn holds(&self) -> bool {
        self.slack >= -self.tolerance
    }
}

/// The scalar program behind per-class spectra: maximize `sum_p f(x_p)`
/// subject to `sum_p x_p = c` over `r` nonnegative variables, where
///
/// ```text
/// f(x) = m * ln(1 + d x / (m eps_sq)) - c * ln(1 + d x / (c eps_sq))
/// ```
///
/// `r` is the per-class rank budget and `c` the class mass.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalarProgram<T: Real> {
    pub r: usize,
    pub c: T,
    pub d: usize,
    pub m: usize,
    pub eps_sq: T,
}

impl<T: Real> ScalarProgram<T> {
    pub fn new(r: usize, c: T, d: usize, m: usize, eps_sq: T) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidInput("rank budget r must be positive".into()));
        }
        if r > d {
            return Err(Error::InvalidInput(format!(
                "rank budget r={r} exceeds the ambient dimension d={d}"
            )));
        }
        if !(c > T::zero()) || !c.is_finite() {
            return Err(Error::InvalidInput("class mass c must be positive".into()));
        }
        if m == 0 || real::<T>(m as f64) < c {
            return Err(Error::InvalidInput(format!(
                "total count m={m} must be at least the class mass"
            )));
        }
        if !(eps_sq > T::zero()) {
            return Err(Error::InvalidInput("eps_sq must be positive".into()));
        }
        Ok(Self { r, c, d, m, eps_sq })
    }

    /// The scalar objective `f`, in natural-log units.
    pub fn f(&self, x: T) -> T {
        let d = real::<T>(self.d as f64);
        let m = real::<T>(self.m as f64);
        let whole = m * (T::one() + d * x / (m * self.eps_sq)).ln();
        let part = self.c * (T::one() + d * x / (self.c * self.eps_sq)).ln();
        whole - part
    }

    /// The precision condition `eps_sq^2 < (c/m) * (d/r)^2` under which each
    /// class is expected to fill its rank budget with a flat spectrum.
    pub fn diversity_condition(&self) -> bool {
        let lim = (self.c / real::<T>(self.m as f64))
            * (real::<T>(self.d as f64) / real::<T>(self.r as f64)).powi(2);
        self.eps_sq * self.eps_sq < lim
    }
}

/// Measured structure of a candidate optimum: worst cross-class coherence,
/// per-class spectra and rank estimates, and the precision-condition flag.
#[derive(Debug, Clone, Serialize)]
pub struct OptimalityDiagnostics<T: Real> {
    pub max_interclass_cosine: T,
    pub per_class_singular_values: Vec<Vec<T>>,
    pub per_class_rank_estimate: Vec<usize>,
    pub diversity_condition_satisfied: bool,
}

/// Raw log-det sides of the coding-rate sandwich, in the configured base:
///
/// ```text
/// sum_j m_j/2 logdet(I + d/(m_j e) Zj Zj')   <=   m/2 logdet(I + d/(m e) Z Z')
///                                            <=   sum_j m/2 logdet(I + d/(m e) Zj Zj')
/// ```
///
/// The lower bound is tight iff the parts share the scaled covariance
/// `Zj Zj'/m_j`; the upper bound is tight iff the parts are pairwise
/// orthogonal.
pub fn check_rate_bounds<T: Real>(
    parts: &[FeatureMatrix<T>],
    params: &RateParams<T>,
) -> Result<(BoundReport<T>, BoundReport<T>)> {
    if parts.len() < 2 {
        return Err(Error::InvalidInput(
            "rate bounds need at least two parts".into(),
        ));
    }
    let d = parts[0].dim();
    if parts.iter().any(|p| p.dim() != d) {
        return Err(Error::DimensionMismatch(
            "all parts must share the feature dimension".into(),
        ));
    }
    let m: usize = parts.iter().map(|p| p.len()).sum();
    let b = params.base_factor();
    let half = real::<T>(0.5);

    let mut whole = parts[0].clone();
    for p in &parts[1..] {
        whole = whole.concat(p)?;
    }
    let alpha_m = real::<T>(d as f64) / (real::<T>(m as f64) * params.eps_sq());
    let middle = real::<T>(m as f64)
        * half
        * crate::rates::logdet_identity_plus_gram(&whole, alpha_m)?
        * b;

    let mut lower_lhs = T::zero();
    let mut upper_rhs = T::zero();
    for p in parts {
        let mj = real::<T>(p.len() as f64);
        let alpha_j = real::<T>(d as f64) / (mj * params.eps_sq());
        lower_lhs += mj * half * crate::rates::logdet_identity_plus_gram(p, alpha_j)? * b;
        upper_rhs += real::<T>(m as f64)
            * half
            * crate::rates::logdet_identity_plus_gram(p, alpha_m)?
            * b;
    }

    let lower = BoundReport::new(lower_lhs, middle, shared_scaled_covariance(parts));
    let upper = BoundReport::new(middle, upper_rhs, pairwise_orthogonal(parts, real(EQUALITY_TOL)));
    Ok((lower, upper))
}

fn shared_scaled_covariance<T: Real>(parts: &[FeatureMatrix<T>]) -> bool {
    let tol: T = real(1e-8);
    let cov = |p: &FeatureMatrix<T>| {
        p.data() * p.data().transpose() / real::<T>(p.len() as f64)
    };
    let first = cov(&parts[0]);
    parts[1..].iter().all(|p| (cov(p) - &first).amax() <= tol)
}

fn pairwise_orthogonal<T: Real>(parts: &[FeatureMatrix<T>], tol: T) -> bool {
    for i in 0..parts.len() {
        for j in (i + 1)..parts.len() {
            let cross = parts[i].data().transpose() * parts[j].data();
            if cross.amax() > tol {
                return false;
            }
        }
    }
    true
}

/// Upper bound on the rate reduction for a hard partition:
///
/// ```text
/// DeltaR <= sum_j 1/(2m) [ m logdet(I + d/(m e) Zj Zj') - m_j logdet(I + d/(m_j e) Zj Zj') ]
/// ```
///
/// Soft memberships are rejected; the bound is stated for partitions.
pub fn check_reduction_upper_bound<T: Real>(
    z: &FeatureMatrix<T>,
    pi: &Membership<T>,
    params: &RateParams<T>,
) -> Result<BoundReport<T>> {
    if pi.len() != z.len() {
        return Err(Error::DimensionMismatch(
            "membership rows must match sample count".into(),
        ));
    }
    if !pi.is_hard(real(1e-9)) {
        return Err(Error::InvalidMembership(
            "the reduction upper bound requires a hard partition".into(),
        ));
    }
    let delta = rate_reduction(z, pi, params)?.reduction;

    let labels = pi.hard_labels();
    let classes = split_classes(z, labels.as_slice(), pi.num_classes());
    let (d, m) = (z.dim(), z.len());
    let b = params.base_factor();
    let alpha_m = real::<T>(d as f64) / (real::<T>(m as f64) * params.eps_sq());
    let inv_two_m = T::one() / (real::<T>(2.0) * real::<T>(m as f64));
    let mut rhs = T::zero();
    let mut nonempty = Vec::new();
    for class in classes.into_iter().flatten() {
        let mj = real::<T>(class.len() as f64);
        let alpha_j = real::<T>(d as f64) / (mj * params.eps_sq());
        let ld_m = crate::rates::logdet_identity_plus_gram(&class, alpha_m)?;
        let ld_j = crate::rates::logdet_identity_plus_gram(&class, alpha_j)?;
        rhs += inv_two_m * (real::<T>(m as f64) * ld_m - mj * ld_j) * b;
        nonempty.push(class);
    }
    let equality = pairwise_orthogonal(&nonempty, real(EQUALITY_TOL));
    Ok(BoundReport::new(delta, rhs, equality))
}

/// Splits columns by hard label; empty classes yield `None`.
fn split_classes<T: Real>(
    z: &FeatureMatrix<T>,
    labels: &[usize],
    k: usize,
) -> Vec<Option<FeatureMatrix<T>>> {
    (0..k)
        .map(|j| {
            let cols: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter_map(|(i, &l)| (l == j).then_some(i))
                .collect();
            if cols.is_empty() {
                return None;
            }
            let mut data = DMatrix::zeros(z.dim(), cols.len());
            for (dst, &src) in cols.iter().enumerate() {
                data.set_column(dst, &z.data().column(src));
            }
            Some(FeatureMatrix::new(data).expect("class matrix is finite and nonempty"))
        })
        .collect()
}

/// Solves the scalar program over the two families that carry its optima:
/// the equal split `x = [c/r, ..., c/r]` and `[x_H, ..., x_H, x_L]` with
/// `(r-1) x_H + x_L = c`, searched over the closed bracket
/// `x_H in [c/r, c/(r-1)]` to 1e-10 width.
///
/// Returns singular values `sigma_p = sqrt(x_p)` sorted descending and the
/// attained objective in natural-log units.
pub fn optimal_singular_values<T: Real>(prog: &ScalarProgram<T>) -> (Vec<T>, T) {
    let r = prog.r;
    let c = prog.c;
    let equal = c / real::<T>(r as f64);
    let mut best_profile = vec![equal; r];
    let mut best_obj = prog.f(equal) * real::<T>(r as f64);

    if r >= 2 {
        let rm1 = real::<T>((r - 1) as f64);
        let lo = equal;
        let hi = c / rm1;
        let g = |x_h: T| prog.f(x_h) * rm1 + prog.f(c - rm1 * x_h);
        let x_h = golden_section_max(g, lo, hi, real(1e-10));
        let obj = g(x_h);
        if obj > best_obj {
            best_obj = obj;
            let x_l = (c - rm1 * x_h).max(T::zero());
            let mut p = vec![x_h; r - 1];
            p.push(x_l);
            best_profile = p;
        }
    }

    let mut sigmas: Vec<T> = best_profile.iter().map(|&x| x.sqrt()).collect();
    sigmas.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    (sigmas, best_obj)
}

/// Coarse scan plus golden-section refinement of a unimodal-enough `g` on
/// `[lo, hi]`, to the requested bracket width.
fn golden_section_max<T: Real>(g: impl Fn(T) -> T, lo: T, hi: T, width: T) -> T {
    const SCAN: usize = 256;
    let span = hi - lo;
    if span <= width {
        return (lo + hi) * real::<T>(0.5);
    }
    let mut best_i = 0usize;
    let mut best_v = g(lo);
    for i in 1..=SCAN {
        let x = lo + span * real::<T>(i as f64 / SCAN as f64);
        let v = g(x);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let step = span * real::<T>(1.0 / SCAN as f64);
    let mut a = lo + step * real::<T>(best_i.saturating_sub(1) as f64);
    let mut b = (lo + step * real::<T>((best_i + 1) as f64)).min(hi);
    let phi: T = real(0.618_033_988_749_894_9);
    let mut guard = 0;
    while b - a > width && guard < 200 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if g(x1) < g(x2) {
            a = x1;
        } else {
            b = x2;
        }
        guard += 1;
    }
    (a + b) * real::<T>(0.5)
}

/// Measures how close `(Z, pi)` is to the predicted optimal structure.
///
/// Requires a hard membership with no empty class. Cosines are computed on
/// unit-normalized columns; rank estimates use the [`RANK_REL_TOL`] relative
/// threshold; the diversity condition takes each class's rank budget as
/// `min(d, m_j)` since free optimization carries no explicit rank cap.
pub fn diagnose_optimum<T: Real>(
    z: &FeatureMatrix<T>,
    pi: &Membership<T>,
    params: &RateParams<T>,
) -> Result<OptimalityDiagnostics<T>> {
    if pi.len() != z.len() {
        return Err(Error::DimensionMismatch(
            "membership rows must match sample count".into(),
        ));
    }
    if !pi.is_hard(real(1e-9)) {
        return Err(Error::InvalidMembership(
            "optimality diagnostics require a hard partition".into(),
        ));
    }
    let k = pi.num_classes();
    let labels = pi.hard_labels();
    let classes = split_classes(z, labels.as_slice(), k);
    if classes.iter().any(Option::is_none) {
        return Err(Error::InvalidInput(
            "optimality diagnostics require every class to be nonempty".into(),
        ));
    }
    let classes: Vec<FeatureMatrix<T>> = classes.into_iter().flatten().collect();

    let normalized = z.clone().normalize_columns()?;
    let mut max_cos = T::zero();
    for i in 0..k {
        for j in (i + 1)..k {
            let a = split_classes(&normalized, labels.as_slice(), k);
            let (zi, zj) = (a[i].as_ref().unwrap(), a[j].as_ref().unwrap());
            let cross = zi.data().transpose() * zj.data();
            max_cos = max_cos.max(cross.amax());
        }
    }

    let mut spectra = Vec::with_capacity(k);
    let mut ranks = Vec::with_capacity(k);
    for class in &classes {
        let mut sv: Vec<T> = class.data().clone().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
        let smax = sv.first().copied().unwrap_or_else(T::zero);
        let thresh = smax * real::<T>(RANK_REL_TOL);
        let rank = sv.iter().filter(|&&s| s > thresh && s > T::zero()).count();
        spectra.push(sv);
        ranks.push(rank);
    }

    let d = z.dim();
    let m = real::<T>(z.len() as f64);
    let mut lim = T::max_value().expect("bounded scalar");
    for class in &classes {
        let mj = real::<T>(class.len() as f64);
        let dj = real::<T>(d.min(class.len()) as f64);
        let this = (mj / m) * (real::<T>(d as f64) / dj).powi(2);
        lim = lim.min(this);
    }
    let eps4 = params.eps_sq() * params.eps_sq();

    Ok(OptimalityDiagnostics {
        max_interclass_cosine: max_cos,
        per_class_singular_values: spectra,
        per_class_rank_estimate: ranks,
        diversity_condition_satisfied: eps4 < lim,
    })
}

/// Concavity of the segmented rate in the membership:
/// `Rc(mix) >= (1-alpha) Rc(a) + alpha Rc(b)` for `alpha in (0,1)`.
pub fn check_concavity_in_pi<T: Real>(
    z: &FeatureMatrix<T>,
    pi_a: &Membership<T>,
    pi_b: &Membership<T>,
    alpha: T,
    params: &RateParams<T>,
) -> Result<BoundReport<T>> {
    if !(alpha > T::zero()) || !(alpha < T::one()) {
        return Err(Error::InvalidInput(
            "mixing weight must lie strictly inside (0, 1)".into(),
        ));
    }
    let mix = pi_a.mix(pi_b, alpha)?;
    let rc_mix = segmented_rate(z, &mix, params)?.0;
    let rc_a = segmented_rate(z, pi_a, params)?.0;
    let rc_b = segmented_rate(z, pi_b, params)?.0;
    let combo = (T::one() - alpha) * rc_a + alpha * rc_b;
    let equality = (pi_a.weights() - pi_b.weights()).amax() <= real(1e-12);
    Ok(BoundReport::new(combo, rc_mix, equality))
}

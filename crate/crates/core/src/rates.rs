//! Coding-rate objectives and their analytic gradients.
//!
//! Everything here is a pure function of its inputs. The rate of a feature
//! matrix `Z` with distortion `eps_sq` is
//!
//! ```text
//! R(Z) = 1/2 * log det(I + d/(m * eps_sq) * Z * Z')
//! ```
//!
//! and the segmented rate weighs per-class log-dets by the class masses. The
//! log-det kernel always works on the smaller side of `Z` (the nonzero
//! spectrum of `Z*Z'` and `Z'*Z` coincide), via singular values for small
//! problems and a symmetric positive definite factorization otherwise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, Membership};
use crate::real::{real, Real};

/// Class masses below this count as empty and contribute nothing.
pub const EMPTY_CLASS_TOL: f64 = 1e-12;

/// Matrix side at or below which the kernel uses singular values of `Z`
/// instead of factorizing a Gram matrix.
const SVD_SIDE_LIMIT: usize = 64;

/// Diagonal jitter added once if the SPD factorization fails.
const JITTER: f64 = 1e-12;

/// Logarithm base for reported rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    /// Binary bits (log base 2).
    #[default]
    Bits,
    /// Natural log units.
    Nats,
}

/// Distortion and unit configuration shared by all rate computations.
///
/// The distortion enters as its square, mirroring how it appears in the
/// objective, so there is no ambiguity about squaring at call sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams<T: Real> {
    eps_sq: T,
    log_base: LogBase,
}

impl<T: Real> RateParams<T> {
    pub fn new(eps_sq: T, log_base: LogBase) -> Result<Self> {
        if !(eps_sq > T::zero()) || !eps_sq.is_finite() {
            return Err(Error::InvalidInput(format!(
                "eps_sq must be positive and finite, got {eps_sq:?}"
            )));
        }
        Ok(Self { eps_sq, log_base })
    }

    pub fn bits(eps_sq: T) -> Result<Self> {
        Self::new(eps_sq, LogBase::Bits)
    }

    pub fn nats(eps_sq: T) -> Result<Self> {
        Self::new(eps_sq, LogBase::Nats)
    }

    pub fn eps_sq(&self) -> T {
        self.eps_sq
    }

    pub fn log_base(&self) -> LogBase {
        self.log_base
    }

    /// Multiplier converting a natural-log quantity to the configured base.
    pub fn base_factor(&self) -> T {
        match self.log_base {
            LogBase::Bits => T::one() / real::<T>(std::f64::consts::LN_2),
            LogBase::Nats => T::one(),
        }
    }

    /// The coefficient `d / (m * eps_sq)`.
    fn alpha(&self, d: usize, m: usize) -> T {
        real::<T>(d as f64) / (real::<T>(m as f64) * self.eps_sq)
    }
}

/// A full rate evaluation: whole rate, segmented rate, their difference, and
/// the parameters everything was computed under.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport<T: Real> {
    pub rate_whole: T,
    pub rate_segmented: T,
    pub reduction: T,
    pub per_class_rates: Vec<T>,
    pub params: RateParams<T>,
    pub d: usize,
    pub m: usize,
}

/// `log det(I + alpha * Z * Z')` in natural-log units.
///
/// Evaluated on the side of size `min(d, m)`: singular values of `Z` when the
/// small side is at most 64, otherwise a Cholesky factorization of the smaller
/// Gram matrix with one jitter retry.
pub fn logdet_identity_plus_gram<T: Real>(z: &FeatureMatrix<T>, alpha: T) -> Result<T> {
    if !(alpha > T::zero()) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!(
            "alpha must be positive and finite, got {alpha:?}"
        )));
    }
    logdet_gram_impl(z.data(), alpha)
}

fn logdet_gram_impl<T: Real>(z: &DMatrix<T>, alpha: T) -> Result<T> {
    let (d, m) = z.shape();
    if d.min(m) <= SVD_SIDE_LIMIT {
        let sv = z.clone().singular_values();
        let mut acc = T::zero();
        for &s in sv.iter() {
            acc += (T::one() + alpha * s * s).ln();
        }
        if !acc.is_finite() {
            return Err(Error::Numerical("log-det produced a non-finite value".into()));
        }
        return Ok(acc);
    }
    let gram = if d <= m {
        z * z.transpose()
    } else {
        z.transpose() * z
    };
    let n = gram.nrows();
    let mut b = gram * alpha;
    for i in 0..n {
        b[(i, i)] += T::one();
    }
    match cholesky_logdet(b.clone()) {
        Some(v) => Ok(v),
        None => {
            let jitter: T = real(JITTER);
            for i in 0..n {
                b[(i, i)] += jitter;
            }
            cholesky_logdet(b).ok_or_else(|| {
                Error::Numerical("SPD factorization failed after jitter retry".into())
            })
        }
    }
}

fn cholesky_logdet<T: Real>(b: DMatrix<T>) -> Option<T> {
    let chol = b.cholesky()?;
    let l = chol.l_dirty();
    let two = real::<T>(2.0);
    let mut acc = T::zero();
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln() * two;
    }
    acc.is_finite().then_some(acc)
}

/// Average coding rate of the whole sample set.
pub fn coding_rate<T: Real>(z: &FeatureMatrix<T>, params: &RateParams<T>) -> Result<T> {
    let ld = logdet_identity_plus_gram(z, params.alpha(z.dim(), z.len()))?;
    Ok(ld * real::<T>(0.5) * params.base_factor())
}

/// Total coding length `(m + d)/2 * log det(...)`, i.e. `(m + d)` times the rate.
pub fn coding_length<T: Real>(z: &FeatureMatrix<T>, params: &RateParams<T>) -> Result<T> {
    let ld = logdet_identity_plus_gram(z, params.alpha(z.dim(), z.len()))?;
    let half_sum = real::<T>((z.len() + z.dim()) as f64) * real::<T>(0.5);
    Ok(ld * half_sum * params.base_factor())
}

/// Membership-weighted segmented rate and the per-class summands.
///
/// A class whose mass is below [`EMPTY_CLASS_TOL`] contributes exactly zero.
pub fn segmented_rate<T: Real>(
    z: &FeatureMatrix<T>,
    pi: &Membership<T>,
    params: &RateParams<T>,
) -> Result<(T, Vec<T>)> {
    check_sample_count(z, pi)?;
    let (d, m) = (z.dim(), z.len());
    let inv_two_m = T::one() / (real::<T>(2.0) * real::<T>(m as f64));
    let mut per_class = Vec::with_capacity(pi.num_classes());
    let mut total = T::zero();
    for j in 0..pi.num_classes() {
        let w = pi.class_weights(j);
        let mass = w.sum();
        if mass <= real(EMPTY_CLASS_TOL) {
            per_class.push(T::zero());
            continue;
        }
        let scaled = scale_columns_sqrt(z.data(), &w);
        let alpha_j = real::<T>(d as f64) / (mass * params.eps_sq());
        let ld = logdet_gram_impl(&scaled, alpha_j)?;
        let term = mass * inv_two_m * ld * params.base_factor();
        per_class.push(term);
        total += term;
    }
    Ok((total, per_class))
}

/// Keeps only columns with positive weight, scaled by the square root of the
/// weight, so the weighted Gram matrix is an ordinary one.
fn scale_columns_sqrt<T: Real>(z: &DMatrix<T>, w: &DVector<T>) -> DMatrix<T> {
    let cols: Vec<usize> = (0..z.ncols()).filter(|&i| w[i] > T::zero()).collect();
    let mut out = DMatrix::zeros(z.nrows(), cols.len());
    for (dst, &src) in cols.iter().enumerate() {
        let s = w[src].sqrt();
        for r in 0..z.nrows() {
            out[(r, dst)] = z[(r, src)] * s;
        }
    }
    out
}

/// Rate reduction: whole rate minus segmented rate, with the full report.
pub fn rate_reduction<T: Real>(
    z: &FeatureMatrix<T>,
    pi: &Membership<T>,
    params: &RateParams<T>,
) -> Result<RateReport<T>> {
    let rate_whole = coding_rate(z, params)?;
    let (rate_segmented, per_class_rates) = segmented_rate(z, pi, params)?;
    Ok(RateReport {
        rate_whole,
        rate_segmented,
        reduction: rate_whole - rate_segmented,
        per_class_rates,
        params: *params,
        d: z.dim(),
        m: z.len(),
    })
}

/// Rescaled rate `1/(2*gamma1) * log det(I + gamma2 * d/(m*eps_sq) * Z*Z')`.
///
/// With `gamma1 = gamma2 = 1` this reduces exactly to [`coding_rate`].
pub fn scaled_rate<T: Real>(
    z: &FeatureMatrix<T>,
    params: &RateParams<T>,
    gamma1: T,
    gamma2: T,
) -> Result<T> {
    check_gammas(gamma1, gamma2)?;
    let alpha = gamma2 * params.alpha(z.dim(), z.len());
    let ld = logdet_identity_plus_gram(z, alpha)?;
    Ok(ld * (real::<T>(0.5) / gamma1) * params.base_factor())
}

fn check_gammas<T: Real>(gamma1: T, gamma2: T) -> Result<()> {
    if !(gamma1 > T::zero()) || !(gamma2 > T::zero()) || !gamma1.is_finite() || !gamma2.is_finite()
    {
        return Err(Error::InvalidInput(
            "rescaling factors must be positive and finite".into(),
        ));
    }
    Ok(())
}

/// Rate-reduction distance between two sample sets: the two sets are treated
/// as the two classes of a concatenated matrix. For equal sizes this equals
/// `R([Zi Zj]) - (R(Zi) + R(Zj)) / 2`; unequal sizes get the mass-weighted form.
pub fn pair_distance<T: Real>(
    zi: &FeatureMatrix<T>,
    zj: &FeatureMatrix<T>,
    params: &RateParams<T>,
) -> Result<T> {
    let both = zi.concat(zj)?;
    let labels: Vec<usize> = std::iter::repeat_n(0, zi.len())
        .chain(std::iter::repeat_n(1, zj.len()))
        .collect();
    let pi = Membership::from_labels(&labels.into(), 2)?;
    Ok(rate_reduction(&both, &pi, params)?.reduction)
}

/// Analytic gradient of [`coding_rate`] with respect to `Z`.
pub fn grad_coding_rate<T: Real>(
    z: &FeatureMatrix<T>,
    params: &RateParams<T>,
) -> Result<DMatrix<T>> {
    let alpha = params.alpha(z.dim(), z.len());
    let g = grad_class_term(z.data(), None, alpha)?;
    Ok(g * alpha * params.base_factor())
}

/// Analytic gradient of [`scaled_rate`] with respect to `Z`.
pub fn grad_scaled_rate<T: Real>(
    z: &FeatureMatrix<T>,
    params: &RateParams<T>,
    gamma1: T,
    gamma2: T,
) -> Result<DMatrix<T>> {
    check_gammas(gamma1, gamma2)?;
    let alpha = gamma2 * params.alpha(z.dim(), z.len());
    let g = grad_class_term(z.data(), None, alpha)?;
    Ok(g * (alpha / gamma1) * params.base_factor())
}

/// Analytic gradient of [`segmented_rate`] with respect to `Z`.
///
/// Each class contributes `d/(m*eps_sq) * (I + alpha_j Z P_j Z')^-1 Z P_j`;
/// empty classes contribute zero.
pub fn grad_segmented_rate<T: Real>(
    z: &FeatureMatrix<T>,
    pi: &Membership<T>,
    params: &RateParams<T>,
) -> Result<DMatrix<T>> {
    check_sample_count(z, pi)?;
    let (d, m) = (z.dim(), z.len());
    let alpha = params.alpha(d, m);
    let mut g = DMatrix::zeros(d, m);
    for j in 0..pi.num_classes() {
        let w = pi.class_weights(j);
        let mass = w.sum();
        if mass <= real(EMPTY_CLASS_TOL) {
            continue;
        }
        let alpha_j = real::<T>(d as f64) / (mass * params.eps_sq());
        g += grad_class_term(z.data(), Some(&w), alpha_j)?;
    }
    Ok(g * alpha * params.base_factor())
}

/// Analytic gradient of the rate reduction with respect to `Z`.
///
/// With a single class the two terms cancel exactly and the gradient is
/// identically zero.
pub fn grad_rate_reduction<T: Real>(
    z: &FeatureMatrix<T>,
    pi: &Membership<T>,
    params: &RateParams<T>,
) -> Result<DMatrix<T>> {
    Ok(grad_coding_rate(z, params)? - grad_segmented_rate(z, pi, params)?)
}

/// `(I + alpha Z W Z')^-1 Z W` with `W = diag(w)` (identity when `w` is None),
/// solved on the smaller of the two Gram sides. With `B = Z sqrt(W)` the tall
/// case uses `(I + alpha B B')^-1 B = B (I + alpha B'B)^-1`.
fn grad_class_term<T: Real>(
    z: &DMatrix<T>,
    w: Option<&DVector<T>>,
    alpha: T,
) -> Result<DMatrix<T>> {
    let (d, m) = z.shape();
    let b = match w {
        Some(w) => scale_columns_sqrt_full(z, w),
        None => z.clone(),
    };
    if d <= m {
        let mut a = &b * b.transpose() * alpha;
        for i in 0..d {
            a[(i, i)] += T::one();
        }
        let zw = match w {
            Some(w) => {
                let mut zw = z.clone();
                for (i, mut c) in zw.column_iter_mut().enumerate() {
                    c *= w[i];
                }
                zw
            }
            None => z.clone(),
        };
        solve_spd(a, zw)
    } else {
        let mut a = b.transpose() * &b * alpha;
        for i in 0..m {
            a[(i, i)] += T::one();
        }
        let y = solve_spd(a, b.transpose())?; // (I + alpha B'B)^-1 B'
        let mut t = y.transpose(); // B (I + alpha B'B)^-1
        if let Some(w) = w {
            for (i, mut c) in t.column_iter_mut().enumerate() {
                c *= w[i].sqrt();
            }
        }
        Ok(t)
    }
}

/// Like [`scale_columns_sqrt`] but keeps zero-weight columns (as zeros).
fn scale_columns_sqrt_full<T: Real>(z: &DMatrix<T>, w: &DVector<T>) -> DMatrix<T> {
    let mut out = z.clone();
    for (i, mut c) in out.column_iter_mut().enumerate() {
        c *= w[i].sqrt();
    }
    out
}

/// Cholesky solve with one jitter retry.
fn solve_spd<T: Real>(a: DMatrix<T>, rhs: DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    match a.clone().cholesky() {
        Some(ch) => Ok(ch.solve(&rhs)),
        None => {
            let mut a2 = a;
            let jitter: T = real(JITTER);
            for i in 0..n {
                a2[(i, i)] += jitter;
            }
            a2.cholesky()
                .map(|ch| ch.solve(&rhs))
                .ok_or_else(|| Error::Numerical("SPD solve failed after jitter retry".into()))
        }
    }
}

fn check_sample_count<T: Real>(z: &FeatureMatrix<T>, pi: &Membership<T>) -> Result<()> {
    if pi.len() != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "membership has {} rows but the feature matrix has {} columns",
            pi.len(),
            z.len()
        )));
    }
    Ok(())
}

//! Seeded generators for synthetic benchmark data: subspace mixtures,
//! unit-sphere Gaussians, label corruption, and augmentation-style
//! self-labeling.
//!
//! All randomness comes from ChaCha8 seeded with the caller's 64-bit seed, so
//! a given spec and seed always reproduce the same output bit for bit within
//! one build. Gaussian draws are sampled in f64 and converted, keeping the
//! draw sequence identical across scalar types.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, LabelVector, Membership};
use crate::real::{real, Real};

/// Recipe for a mixture of per-class linear subspaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceMixtureSpec {
    /// Number of classes.
    pub k: usize,
    /// Ambient dimension.
    pub d: usize,
    /// Per-class subspace dimension (uniform across classes).
    pub d_j: usize,
    pub samples_per_class: usize,
    /// Draw the class subspaces as disjoint blocks of one shared orthonormal
    /// frame (requires `k * d_j <= d`); otherwise each class gets an
    /// independent random orthonormal basis.
    pub orthogonal: bool,
    /// Tag for consumers: emit as raw inputs X rather than features Z.
    pub ambient_is_input: bool,
    pub seed: u64,
}

impl SubspaceMixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 || self.d_j == 0 || self.samples_per_class == 0 {
            return Err(Error::InvalidInput(
                "k, d, d_j and samples_per_class must all be positive".into(),
            ));
        }
        if self.d_j > self.d {
            return Err(Error::InvalidInput(format!(
                "subspace dimension {} exceeds ambient dimension {}",
                self.d_j, self.d
            )));
        }
        if self.orthogonal && self.k * self.d_j > self.d {
            return Err(Error::InvalidInput(format!(
                "orthogonal mode needs k*d_j <= d, got {}*{} > {}",
                self.k, self.d_j, self.d
            )));
        }
        Ok(())
    }
}

/// Samples per-class subspace bases, draws Gaussian coefficients inside each
/// subspace, maps to the ambient space, and normalizes every column to the
/// unit sphere. Labels are class-blocked.
pub fn gen_subspace_mixture<T: Real>(
    spec: &SubspaceMixtureSpec,
) -> Result<(FeatureMatrix<T>, LabelVector)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (k, d, dj, n) = (spec.k, spec.d, spec.d_j, spec.samples_per_class);

    let bases: Vec<DMatrix<T>> = if spec.orthogonal {
        let frame = random_gaussian::<T>(d, k * dj, &mut rng);
        let q = frame.qr().q();
        (0..k).map(|j| q.columns(j * dj, dj).into_owned()).collect()
    } else {
        (0..k)
            .map(|_| random_gaussian::<T>(d, dj, &mut rng).qr().q())
            .collect()
    };

    let mut data = DMatrix::zeros(d, k * n);
    let mut labels = Vec::with_capacity(k * n);
    for (j, basis) in bases.iter().enumerate() {
        let coeff = random_gaussian::<T>(dj, n, &mut rng);
        let cols = basis * coeff;
        data.view_mut((0, j * n), (d, n)).copy_from(&cols);
        labels.extend(std::iter::repeat_n(j, n));
    }
    let z = FeatureMatrix::new(data)?.normalize_columns()?;
    Ok((z, LabelVector::from(labels)))
}

/// Unit-normalized i.i.d. standard normal columns with round-robin labels.
pub fn gen_gaussian<T: Real>(
    d: usize,
    m: usize,
    k: usize,
    seed: u64,
) -> Result<(FeatureMatrix<T>, LabelVector)> {
    if d == 0 || m == 0 || k == 0 {
        return Err(Error::InvalidInput("d, m and k must be positive".into()));
    }
    if !m.is_multiple_of(k) {
        return Err(Error::InvalidInput(format!(
            "sample count {m} must be divisible by the class count {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = random_gaussian::<T>(d, m, &mut rng);
    let z = FeatureMatrix::new(data)?.normalize_columns()?;
    let labels: Vec<usize> = (0..m).map(|i| i % k).collect();
    Ok((z, LabelVector::from(labels)))
}

/// Hard one-hot membership from labels. See [`Membership::from_labels`].
pub fn membership_from_labels<T: Real>(labels: &LabelVector, k: usize) -> Result<Membership<T>> {
    Membership::from_labels(labels, k)
}

/// Reassigns a uniformly random `floor(ratio * m)`-subset of positions to a
/// uniformly random *different* label.
pub fn corrupt_labels(
    labels: &LabelVector,
    ratio: f64,
    k: usize,
    seed: u64,
) -> Result<LabelVector> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidInput(format!(
            "corruption ratio must lie in [0, 1], got {ratio}"
        )));
    }
    if let Some(&bad) = labels.as_slice().iter().find(|&&l| l >= k) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for k={k}"
        )));
    }
    let m = labels.len();
    let n_corrupt = (ratio * m as f64).floor() as usize;
    if n_corrupt > 0 && k < 2 {
        return Err(Error::InvalidInput(
            "cannot corrupt labels with fewer than two classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // partial Fisher-Yates picks the corrupted subset uniformly
    let mut idx: Vec<usize> = (0..m).collect();
    for i in 0..n_corrupt.min(m) {
        let j = rng.random_range(i..m);
        idx.swap(i, j);
    }
    let mut out = labels.as_slice().to_vec();
    for &pos in idx.iter().take(n_corrupt) {
        let old = out[pos];
        let mut new = rng.random_range(0..k - 1);
        if new >= old {
            new += 1;
        }
        out[pos] = new;
    }
    Ok(LabelVector::from(out))
}

/// Augmentation-style self-labeling: replicates each input column
/// `n_augment` times with additive Gaussian noise, renormalizes, and labels
/// all copies of column j with class j.
pub fn self_label<T: Real>(
    x: &FeatureMatrix<T>,
    n_augment: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(FeatureMatrix<T>, LabelVector)> {
    if n_augment == 0 {
        return Err(Error::InvalidInput("n_augment must be positive".into()));
    }
    if noise_sigma < 0.0 {
        return Err(Error::InvalidInput("noise_sigma must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, k) = (x.dim(), x.len());
    let sigma: T = real(noise_sigma);
    let mut data = DMatrix::zeros(d, k * n_augment);
    let mut labels = Vec::with_capacity(k * n_augment);
    for j in 0..k {
        let base = x.data().column(j);
        for copy in 0..n_augment {
            for r in 0..d {
                let noise: f64 = StandardNormal.sample(&mut rng);
                data[(r, j * n_augment + copy)] = base[r] + sigma * real::<T>(noise);
            }
        }
        labels.extend(std::iter::repeat_n(j, n_augment));
    }
    let z = FeatureMatrix::new(data)?.normalize_columns()?;
    Ok((z, LabelVector::from(labels)))
}

/// Two noisy concentric circles of different radius in the plane, embedded in
/// three ambient dimensions. Raw inputs for a feature map, not normalized.
pub fn gen_two_circles<T: Real>(
    n_per_class: usize,
    r_inner: f64,
    r_outer: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<(FeatureMatrix<T>, LabelVector)> {
    if n_per_class == 0 {
        return Err(Error::InvalidInput("n_per_class must be positive".into()));
    }
    if r_inner <= 0.0 || r_outer <= 0.0 {
        return Err(Error::InvalidInput("radii must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 2 * n_per_class;
    let mut data = DMatrix::zeros(3, m);
    let mut labels = Vec::with_capacity(m);
    for (class, radius) in [(0usize, r_inner), (1, r_outer)] {
        for i in 0..n_per_class {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let col = class * n_per_class + i;
            let (nx, ny, nz): (f64, f64, f64) = (
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            data[(0, col)] = real::<T>(radius * theta.cos() + noise_sigma * nx);
            data[(1, col)] = real::<T>(radius * theta.sin() + noise_sigma * ny);
            data[(2, col)] = real::<T>(noise_sigma * nz);
            labels.push(class);
        }
    }
    Ok((FeatureMatrix::new(data)?, LabelVector::from(labels)))
}

/// d x m matrix of standard normal draws, sampled in f64 column-major order.
fn random_gaussian<T: Real>(d: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<T> {
    DMatrix::from_fn(d, m, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        real::<T>(v)
    })
}

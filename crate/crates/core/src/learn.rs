//! Maximizing the rate reduction: projected gradient ascent over free
//! representations under a normalization constraint, and a small
//! fully-connected feature map trained by manual backpropagation, with the
//! rescaled-rate variant.
//!
//! Both optimizers share the same shape: compute the ascent direction, try a
//! step, halve the step size until the objective does not decrease, accept,
//! repeat. Accepted objectives are nondecreasing up to a 1e-12 relative
//! slack, and a slack-accepted step always terminates the run via the
//! improvement test.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, Membership};
use crate::rates::{
    coding_rate, grad_coding_rate, grad_scaled_rate, grad_segmented_rate, scaled_rate,
    segmented_rate, RateParams,
};
use crate::real::{real, Real};

/// Maximum step halvings before a step attempt is abandoned.
const MAX_HALVINGS: usize = 30;

/// How the representation's scale is pinned during ascent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Every class block keeps squared Frobenius norm equal to its sample
    /// count. Requires a hard membership.
    PerClassFrobenius,
    /// Every feature column stays on the unit sphere.
    UnitSphere,
}

/// Ascent configuration shared by both optimizers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimizerConfig<T: Real> {
    /// Initial step size. Zero is allowed and produces a no-op run.
    pub step_size: T,
    pub max_iters: usize,
    /// Stop once the per-step improvement falls below this.
    pub tol: T,
    pub normalization: Normalization,
    /// Optimize the rescaled-rate objective instead of the plain reduction.
    pub use_ctrl: bool,
    pub gamma1: T,
    pub gamma2: T,
    /// Recorded for provenance; the optimizers themselves are deterministic.
    pub seed: u64,
}

impl<T: Real> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            step_size: real(0.1),
            max_iters: 5000,
            tol: real(1e-8),
            normalization: Normalization::UnitSphere,
            use_ctrl: false,
            gamma1: T::one(),
            gamma2: T::one(),
            seed: 0,
        }
    }
}

impl<T: Real> OptimizerConfig<T> {
    fn validate(&self) -> Result<()> {
        if self.step_size < T::zero() || !self.step_size.is_finite() {
            return Err(Error::InvalidInput("step_size must be nonnegative".into()));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidInput("tol must be positive".into()));
        }
        if !(self.gamma1 > T::zero()) || !(self.gamma2 > T::zero()) {
            return Err(Error::InvalidInput("gamma factors must be positive".into()));
        }
        Ok(())
    }
}

/// One trace row: objective state after the step of the given index.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OptRecord<T: Real> {
    pub iter: usize,
    /// Whole-set rate; the rescaled rate when the run optimizes it.
    pub rate_whole: T,
    pub rate_segmented: T,
    /// The ascent objective: `rate_whole - rate_segmented`.
    pub reduction: T,
    /// Norm of the constrained (tangent-projected) ascent direction.
    pub grad_norm: T,
}

/// Per-iteration history of an ascent run.
#[derive(Debug, Clone, Serialize)]
pub struct OptTrace<T: Real> {
    pub records: Vec<OptRecord<T>>,
}

impl<T: Real> Default for OptTrace<T> {
    fn default() -> Self {
        Self { records: Vec::new() }
    }
}

impl<T: Real> OptTrace<T> {
    pub fn final_record(&self) -> Option<&OptRecord<T>> {
        self.records.last()
    }

    /// Accepted objectives never drop by more than the stated slack.
    pub fn is_monotone(&self, slack: T) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].reduction >= w[0].reduction - slack)
    }
}

fn eval_objective<T: Real>(
    z: &FeatureMatrix<T>,
    pi: &Membership<T>,
    params: &RateParams<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<(T, T, T)> {
    let whole = if cfg.use_ctrl {
        scaled_rate(z, params, cfg.gamma1, cfg.gamma2)?
    } else {
        coding_rate(z, params)?
    };
    let (rc, _) = segmented_rate(z, pi, params)?;
    Ok((whole, rc, whole - rc))
}

fn objective_gradient<T: Real>(
    z: &FeatureMatrix<T>,
    pi: &Membership<T>,
    params: &RateParams<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<DMatrix<T>> {
    let expand = if cfg.use_ctrl {
        grad_scaled_rate(z, params, cfg.gamma1, cfg.gamma2)?
    } else {
        grad_coding_rate(z, params)?
    };
    let g = expand - grad_segmented_rate(z, pi, params)?;
    if !g.iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical("gradient contains non-finite entries".into()));
    }
    Ok(g)
}

/// Relative slack under which a step is still accepted; a slack-accepted step
/// has non-positive improvement and therefore ends the run.
fn accept_slack<T: Real>(obj: T) -> T {
    real::<T>(1e-12) * (T::one() + nalgebra::ComplexField::abs(obj))
}

/// Projected gradient ascent on the rate reduction over a free representation.
///
/// Iterates `Z <- retract(Z + eta * P(grad))` where `P` projects onto the
/// constraint tangent space and the retraction renormalizes (per column on
/// the sphere, per class block in Frobenius mode). The step size doubles
/// after each accepted iteration and halves on rejection, so accepted
/// objectives are nondecreasing. Failing to find a non-decreasing step at the
/// very first iteration is a stagnation error; later on it means convergence.
pub fn optimize_representation<T: Real>(
    z0: &FeatureMatrix<T>,
    pi: &Membership<T>,
    params: &RateParams<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<(FeatureMatrix<T>, OptTrace<T>)> {
    cfg.validate()?;
    if pi.len() != z0.len() {
        return Err(Error::DimensionMismatch(
            "membership rows must match sample count".into(),
        ));
    }
    let masses = class_masses_for(cfg.normalization, pi)?;
    let labels = pi.hard_labels();

    let retract = |z: DMatrix<T>| -> Result<DMatrix<T>> {
        match cfg.normalization {
            Normalization::UnitSphere => {
                Ok(FeatureMatrix::new(z)?.normalize_columns()?.into_inner())
            }
            Normalization::PerClassFrobenius => {
                let mut z = z;
                for (j, &mass) in masses.iter().enumerate() {
                    let mut sq = T::zero();
                    for (i, &l) in labels.as_slice().iter().enumerate() {
                        if l == j {
                            sq += z.column(i).norm_squared();
                        }
                    }
                    if sq <= T::zero() {
                        return Err(Error::DegenerateFeatures(format!(
                            "class {j} collapsed to zero norm"
                        )));
                    }
                    let scale = (mass / sq).sqrt();
                    for (i, &l) in labels.as_slice().iter().enumerate() {
                        if l == j {
                            let mut c = z.column_mut(i);
                            c *= scale;
                        }
                    }
                }
                Ok(z)
            }
        }
    };

    let tangent = |z: &DMatrix<T>, g: &DMatrix<T>| -> DMatrix<T> {
        let mut t = g.clone();
        match cfg.normalization {
            Normalization::UnitSphere => {
                for i in 0..z.ncols() {
                    let zi = z.column(i);
                    let dot = zi.dot(&g.column(i)) / zi.norm_squared();
                    let mut ti = t.column_mut(i);
                    for r in 0..z.nrows() {
                        ti[r] -= dot * zi[r];
                    }
                }
            }
            Normalization::PerClassFrobenius => {
                for j in 0..masses.len() {
                    let mut dot = T::zero();
                    let mut sq = T::zero();
                    for (i, &l) in labels.as_slice().iter().enumerate() {
                        if l == j {
                            dot += z.column(i).dot(&g.column(i));
                            sq += z.column(i).norm_squared();
                        }
                    }
                    let coef = dot / sq;
                    for (i, &l) in labels.as_slice().iter().enumerate() {
                        if l == j {
                            let zi = z.column(i).into_owned();
                            let mut ti = t.column_mut(i);
                            for r in 0..z.nrows() {
                                ti[r] -= coef * zi[r];
                            }
                        }
                    }
                }
            }
        }
        t
    };

    let mut z = FeatureMatrix::new(retract(z0.data().clone())?)?;
    let (mut whole, mut rc, mut obj) = eval_objective(&z, pi, params, cfg)?;
    let mut dir = tangent(z.data(), &objective_gradient(&z, pi, params, cfg)?);
    let mut trace = OptTrace::default();
    trace.records.push(OptRecord {
        iter: 0,
        rate_whole: whole,
        rate_segmented: rc,
        reduction: obj,
        grad_norm: dir.norm(),
    });

    let mut eta = cfg.step_size;
    let two = real::<T>(2.0);
    let mut iter = 0;
    while iter < cfg.max_iters {
        let mut eta_try = eta * two;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = if eta_try.is_zero() {
                z.clone()
            } else {
                FeatureMatrix::new(retract(z.data() + &dir * eta_try)?)?
            };
            let (w, r, o) = eval_objective(&candidate, pi, params, cfg)?;
            if o >= obj - accept_slack(obj) {
                accepted = Some((candidate, w, r, o));
                break;
            }
            eta_try /= two;
        }
        let Some((znew, w, r, o)) = accepted else {
            if iter == 0 {
                return Err(Error::Stagnation(
                    "no ascent step found at the first iteration".into(),
                ));
            }
            break;
        };
        let improvement = o - obj;
        z = znew;
        (whole, rc, obj) = (w, r, o);
        eta = eta_try;
        iter += 1;
        dir = tangent(z.data(), &objective_gradient(&z, pi, params, cfg)?);
        trace.records.push(OptRecord {
            iter,
            rate_whole: whole,
            rate_segmented: rc,
            reduction: obj,
            grad_norm: dir.norm(),
        });
        if improvement < cfg.tol {
            break;
        }
    }
    Ok((z, trace))
}

/// Per-class masses for the Frobenius constraint; sphere mode needs none.
fn class_masses_for<T: Real>(norm: Normalization, pi: &Membership<T>) -> Result<Vec<T>> {
    match norm {
        Normalization::UnitSphere => Ok(Vec::new()),
        Normalization::PerClassFrobenius => {
            if !pi.is_hard(real(1e-9)) {
                return Err(Error::InvalidMembership(
                    "per-class Frobenius normalization requires a hard membership".into(),
                ));
            }
            Ok((0..pi.num_classes()).map(|j| pi.class_mass(j)).collect())
        }
    }
}

/// Activation used between the affine layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Softplus `ln(1 + e^x)`: a smooth rectifier, so finite-difference
    /// gradient checks stay clean.
    SmoothRectifier,
}

fn softplus<T: Real>(x: T) -> T {
    let zero = T::zero();
    x.max(zero) + (T::one() + (-nalgebra::ComplexField::abs(x)).exp()).ln()
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Weights and biases of a small fully connected feature map whose output is
/// projected onto the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapParams<T: Real> {
    layer_widths: Vec<usize>,
    weights: Vec<DMatrix<T>>,
    biases: Vec<DVector<T>>,
    activation: Activation,
}

impl<T: Real> FeatureMapParams<T> {
    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn weights(&self) -> &[DMatrix<T>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [DMatrix<T>] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[DVector<T>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [DVector<T>] {
        &mut self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("at least two widths")
    }

    /// Rebuilds parameters from raw layers, validating shape consistency.
    pub fn from_layers(weights: Vec<DMatrix<T>>, biases: Vec<DVector<T>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::InvalidInput(
                "need one bias vector per weight matrix".into(),
            ));
        }
        let mut widths = vec![weights[0].ncols()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.nrows() != b.len() || w.ncols() != *widths.last().unwrap() {
                return Err(Error::InvalidInput("inconsistent layer shapes".into()));
            }
            if !w.iter().all(|x| x.is_finite()) || !b.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidInput("non-finite parameters".into()));
            }
            widths.push(w.nrows());
        }
        Ok(Self {
            layer_widths: widths,
            weights,
            biases,
            activation: Activation::SmoothRectifier,
        })
    }
}

/// Variance-preserving initialization: weight entries are Gaussian with
/// standard deviation `1/sqrt(fan_in)`, biases zero. Deterministic given the
/// seed.
pub fn init_feature_map<T: Real>(layer_widths: &[usize], seed: u64) -> Result<FeatureMapParams<T>> {
    if layer_widths.len() < 2 {
        return Err(Error::InvalidInput(
            "a feature map needs at least input and output widths".into(),
        ));
    }
    if layer_widths.contains(&0) {
        return Err(Error::InvalidInput("layer widths must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_widths.len() - 1);
    let mut biases = Vec::with_capacity(layer_widths.len() - 1);
    for win in layer_widths.windows(2) {
        let (fan_in, fan_out) = (win[0], win[1]);
        let scale: T = real(1.0 / (fan_in as f64).sqrt());
        let w = DMatrix::from_fn(fan_out, fan_in, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            real::<T>(v) * scale
        });
        weights.push(w);
        biases.push(DVector::zeros(fan_out));
    }
    Ok(FeatureMapParams {
        layer_widths: layer_widths.to_vec(),
        weights,
        biases,
        activation: Activation::SmoothRectifier,
    })
}

struct ForwardCache<T: Real> {
    /// Layer inputs: act[0] = X, act[i] feeds weights[i].
    act: Vec<DMatrix<T>>,
    /// Pre-activation outputs of each layer.
    pre: Vec<DMatrix<T>>,
    /// Pre-projection output column norms.
    norms: Vec<T>,
    /// Sphere-projected output.
    z: DMatrix<T>,
}

fn forward_cache<T: Real>(params: &FeatureMapParams<T>, x: &DMatrix<T>) -> Result<ForwardCache<T>> {
    if x.nrows() != params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} rows but the map expects {}",
            x.nrows(),
            params.input_dim()
        )));
    }
    let layers = params.weights.len();
    let mut act = Vec::with_capacity(layers + 1);
    let mut pre = Vec::with_capacity(layers);
    act.push(x.clone());
    for i in 0..layers {
        let mut s = &params.weights[i] * act.last().unwrap();
        for mut col in s.column_iter_mut() {
            col += &params.biases[i];
        }
        let a = if i < layers - 1 {
            s.map(softplus)
        } else {
            s.clone()
        };
        pre.push(s);
        act.push(a);
    }
    let out = act.last().unwrap().clone();
    let mut z = out;
    let mut norms = Vec::with_capacity(z.ncols());
    let floor: T = real(1e-12);
    for mut col in z.column_iter_mut() {
        let n = col.norm();
        if n < floor {
            return Err(Error::DegenerateFeatures(
                "a feature column collapsed below 1e-12 before projection".into(),
            ));
        }
        col /= n;
        norms.push(n);
    }
    Ok(ForwardCache { act, pre, norms, z })
}

/// Applies the map: affine-activation layers, a final affine layer, then a
/// per-column projection onto the unit sphere.
pub fn feature_map_forward<T: Real>(
    params: &FeatureMapParams<T>,
    x: &FeatureMatrix<T>,
) -> Result<FeatureMatrix<T>> {
    let cache = forward_cache(params, x.data())?;
    FeatureMatrix::new(cache.z)
}

/// Objective value and full parameter gradient of the rate-reduction loss
/// (or its rescaled variant) through the sphere projection and the layers.
/// Also returns the whole and segmented rates at the evaluated point.
#[allow(clippy::type_complexity)]
pub fn feature_map_gradient<T: Real>(
    params: &FeatureMapParams<T>,
    x: &FeatureMatrix<T>,
    pi: &Membership<T>,
    rate_params: &RateParams<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<((T, T, T), Vec<DMatrix<T>>, Vec<DVector<T>>)> {
    let cache = forward_cache(params, x.data())?;
    let z = FeatureMatrix::new(cache.z.clone())?;
    let rates = eval_objective(&z, pi, rate_params, cfg)?;
    let gz = objective_gradient(&z, pi, rate_params, cfg)?;

    // back through the sphere projection: (I - z z') / |a| per column
    let mut g = gz;
    for (i, mut col) in g.column_iter_mut().enumerate() {
        let zi = cache.z.column(i);
        let dot = zi.dot(&col);
        for r in 0..zi.nrows() {
            col[r] = (col[r] - dot * zi[r]) / cache.norms[i];
        }
    }

    let layers = params.weights.len();
    let mut grad_w = vec![DMatrix::zeros(0, 0); layers];
    let mut grad_b = vec![DVector::zeros(0); layers];
    for i in (0..layers).rev() {
        let gs = if i == layers - 1 {
            g
        } else {
            let mut gs = g;
            gs.zip_apply(&cache.pre[i], |gv, s| *gv *= sigmoid(s));
            gs
        };
        grad_w[i] = &gs * cache.act[i].transpose();
        grad_b[i] = DVector::from_iterator(gs.nrows(), gs.row_iter().map(|r| r.sum()));
        g = params.weights[i].transpose() * gs;
    }
    for gw in &grad_w {
        if !gw.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("parameter gradient is non-finite".into()));
        }
    }
    Ok((rates, grad_w, grad_b))
}

/// Full-batch gradient ascent on the rate-reduction objective of
/// `f(X, theta)`, with the same backtracking scheme as
/// [`optimize_representation`]. Returns the trained parameters and the trace.
pub fn train_feature_map<T: Real>(
    params: &FeatureMapParams<T>,
    x: &FeatureMatrix<T>,
    pi: &Membership<T>,
    rate_params: &RateParams<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<(FeatureMapParams<T>, OptTrace<T>)> {
    cfg.validate()?;
    if pi.len() != x.len() {
        return Err(Error::DimensionMismatch(
            "membership rows must match sample count".into(),
        ));
    }
    let mut theta = params.clone();
    let ((mut whole, mut rc, mut obj), mut gw, mut gb) =
        feature_map_gradient(&theta, x, pi, rate_params, cfg)?;
    let grad_norm = |gw: &[DMatrix<T>], gb: &[DVector<T>]| -> T {
        let mut sq = T::zero();
        for g in gw {
            sq += g.norm_squared();
        }
        for g in gb {
            sq += g.norm_squared();
        }
        sq.sqrt()
    };
    let mut trace = OptTrace::default();
    trace.records.push(OptRecord {
        iter: 0,
        rate_whole: whole,
        rate_segmented: rc,
        reduction: obj,
        grad_norm: grad_norm(&gw, &gb),
    });

    let step = |theta: &FeatureMapParams<T>, gw: &[DMatrix<T>], gb: &[DVector<T>], eta: T| {
        let weights = theta
            .weights
            .iter()
            .zip(gw)
            .map(|(w, g)| w + g * eta)
            .collect();
        let biases = theta
            .biases
            .iter()
            .zip(gb)
            .map(|(b, g)| b + g * eta)
            .collect();
        FeatureMapParams {
            layer_widths: theta.layer_widths.clone(),
            weights,
            biases,
            activation: theta.activation,
        }
    };

    let mut eta = cfg.step_size;
    let two = real::<T>(2.0);
    let mut iter = 0;
    while iter < cfg.max_iters {
        let mut eta_try = eta * two;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = if eta_try.is_zero() {
                theta.clone()
            } else {
                step(&theta, &gw, &gb, eta_try)
            };
            let (rates, cw, cb) = feature_map_gradient(&candidate, x, pi, rate_params, cfg)?;
            if rates.2 >= obj - accept_slack(obj) {
                accepted = Some((candidate, rates, cw, cb));
                break;
            }
            eta_try /= two;
        }
        let Some((tnew, rates, cw, cb)) = accepted else {
            if iter == 0 {
                return Err(Error::Stagnation(
                    "no ascent step found at the first iteration".into(),
                ));
            }
            break;
        };
        let improvement = rates.2 - obj;
        theta = tnew;
        (whole, rc, obj) = rates;
        (gw, gb) = (cw, cb);
        eta = eta_try;
        iter += 1;
        trace.records.push(OptRecord {
            iter,
            rate_whole: whole,
            rate_segmented: rc,
            reduction: obj,
            grad_norm: grad_norm(&gw, &gb),
        });
        if improvement < cfg.tol {
            break;
        }
    }
    Ok((theta, trace))
}

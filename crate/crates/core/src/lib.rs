//! Coding-rate objectives for subspace-structured representations.
//!
//! The crate evaluates lossy coding rates and the rate-reduction objective,
//! provides their analytic gradients, constrained ascent optimizers, seeded
//! synthetic data generators, nearest-subspace classification, and clustering
//! metrics. All matrix numerics are generic over the scalar type via
//! [`real::Real`] (f32 or f64); concrete aliases live at the crate root.

// negated comparisons like `!(x > 0)` are deliberate: they reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod learn;
pub mod matrix;
pub mod metrics;
pub mod rates;
pub mod real;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
pub use learn::{
    Activation, FeatureMapParams, Normalization, OptRecord, OptTrace, OptimizerConfig,
};
pub use matrix::{FeatureMatrix, LabelVector, Membership};
pub use metrics::{ClassModel, MetricReport};
pub use rates::{LogBase, RateParams, RateReport};
pub use real::Real;
pub use synth::SubspaceMixtureSpec;
pub use theory::{BoundReport, OptimalityDiagnostics, ScalarProgram};

/// Double-precision aliases (the default choice).
pub type FeatureMatrix64 = FeatureMatrix<f64>;
pub type Membership64 = Membership<f64>;
pub type RateParams64 = RateParams<f64>;
pub type RateReport64 = RateReport<f64>;
pub type OptimizerConfig64 = OptimizerConfig<f64>;
pub type FeatureMapParams64 = FeatureMapParams<f64>;

/// Single-precision aliases.
pub type FeatureMatrix32 = FeatureMatrix<f32>;
pub type Membership32 = Membership<f32>;
pub type RateParams32 = RateParams<f32>;
pub type RateReport32 = RateReport<f32>;
pub type OptimizerConfig32 = OptimizerConfig<f32>;
pub type FeatureMapParams32 = FeatureMapParams<f32>;

//! Bayesian optimization for high-dimensional boxes whose objectives vary
//! only on a low-dimensional manifold.
//!
//! The method keeps three moving parts: a feature map `h` approximating the
//! orthogonal projection onto the manifold (analytic when the geometry is
//! known, a small neural net otherwise, trained on the evaluation history
//! plus a consistency penalty on unlabeled points), a fixed random
//! orthogonal projection `A` compressing mapped points to `m` dimensions,
//! and a Gaussian process over `A·h(x)`. Each iteration maximizes expected
//! improvement of the composition `z ↦ A·h(Aᵀz)` over `[−√m, √m]^m` and
//! evaluates the objective at the back-projected candidate.
//!
//! Everything numeric is generic over [`scalar::Real`] (`f32` or `f64`);
//! the `*64` aliases at the crate root pin the default precision.

pub mod acquisition;
pub mod benchmarks;
pub mod error;
pub mod feature_map;
pub mod gp;
pub mod linalg;
pub mod losses;
pub mod manifold;
pub mod nn;
pub mod optimize;
pub mod projection;
pub mod rng;
pub mod run;
pub mod scalar;
pub mod stats;

pub use error::{CoreError, Result};
pub use scalar::Real;

pub type Projection64 = projection::Projection<f64>;
pub type FeatureMap64 = feature_map::FeatureMap<f64>;
pub type GpModel64 = gp::GpModel<f64>;
pub type ComposedObjective64 = benchmarks::ComposedObjective<f64>;
pub type RunConfig64 = run::RunConfig<f64>;
pub type History64 = run::History<f64>;
pub type TrainingConfig64 = losses::TrainingConfig<f64>;

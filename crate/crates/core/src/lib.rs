//! Certified online learning for two-player zero-sum linear-quadratic games.
//!
//! The plant `x+ = A x + B1 u + B2 v + w` is unknown. A minimizing player
//! (`u`) and a maximizing player (`v`) both run certainty-equivalent saddle
//! feedback computed from a *certified surrogate* model: a ridge estimate,
//! shrunk toward the previous surrogate until it lies inside the current
//! confidence ellipsoid and admits a stabilizing Riccati saddle solution with
//! explicit margins. Models are re-estimated on a determinant-doubling
//! schedule and regret is tracked against the true game value.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the scalar to `f64`, which is what the CLI and
//! the trace files use.

pub mod analysis;
pub mod certify;
pub mod cli;
pub mod controller;
pub mod estimator;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod riccati;
pub mod scalar;
pub mod scenarios;

pub use scalar::Real;

pub type SystemModel = model::SystemModel<f64>;
pub type ThetaMatrix = model::ThetaMatrix<f64>;
pub type CostSpec = model::CostSpec<f64>;
pub type NoiseSpec = model::NoiseSpec<f64>;
pub type GameSpec = model::GameSpec<f64>;
pub type GareSolution = riccati::GareSolution<f64>;
pub type SolverOptions = riccati::SolverOptions<f64>;
pub type DesignState = estimator::DesignState<f64>;
pub type ConfidenceSet = estimator::ConfidenceSet<f64>;
pub type RegularityMargins = certify::RegularityMargins<f64>;
pub type CertifiedModel = certify::CertifiedModel<f64>;
pub type RunSettings = controller::RunSettings<f64>;
pub use controller::RunTrace;
pub type RegretSeries = metrics::RegretSeries<f64>;

//! Survey-weighted Bayesian models for ordinal and nominal small area
//! estimation.
//!
//! Sequential (stick-breaking) logistic models with spatial and AR(1)
//! random effects are fit by Pólya-Gamma Gibbs sampling or by coordinate
//! ascent variational inference, then turned into post-stratified cell
//! estimates and compared with Horvitz-Thompson direct estimates.
//!
//! Everything numerical is generic over [`Real`]; the aliases below fix the
//! usual `f64` precision.

pub mod error;
pub mod estimator;
pub mod gibbs;
pub mod linalg;
pub mod persist;
pub mod pg;
pub mod rng;
pub mod scalar;
pub mod simulation;
pub mod spatial;
pub mod survey;
pub mod truncnorm;
pub mod vb;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Record = survey::UnitRecord<f64>;
pub type Design = survey::StickBrokenDesign<f64>;
pub type Basis = spatial::BasisMatrix<f64>;
pub type Draws = gibbs::PosteriorDraws<f64>;
pub type Frame = estimator::PopulationFrame<f64>;
pub type Estimate = estimator::CellEstimate<f64>;
pub type VariationalFit = vb::VariationalState<f64>;

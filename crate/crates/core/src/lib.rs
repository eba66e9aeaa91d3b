//! Quantum-trajectory simulation of an electrically pumped quantum-dot
//! single-photon source under continuous monitoring, with timer, CUSUM and
//! Bayesian pump-shutoff controllers.
//!
//! The physics and detector modules are generic over [`Real`] (`f32` or
//! `f64`); the Monte Carlo harness in [`experiment`] runs in `f64`. The
//! aliases below name the `f64` instantiations used throughout the harness.

pub mod bayes;
pub mod detect;
pub mod dynamics;
pub mod experiment;
pub mod hilbert;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod scalar;

pub use scalar::Real;

pub type DensityMatrix64 = dynamics::DensityMatrix<f64>;
pub type DensityMatrix32 = dynamics::DensityMatrix<f32>;
pub type Dynamics64 = dynamics::Dynamics<f64>;
pub type Dynamics32 = dynamics::Dynamics<f32>;
pub type ModelParams64 = dynamics::ModelParams<f64>;
pub type Operator64 = hilbert::Operator<f64>;
pub type BayesFilterState64 = bayes::BayesFilterState<f64>;
pub type ChainParams64 = bayes::ChainParams<f64>;
pub type CusumState64 = detect::CusumState<f64>;
pub type Hypotheses64 = detect::Hypotheses<f64>;

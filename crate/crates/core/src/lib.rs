//! Simulation library for safe LQR learning on one-dimensional constrained
//! linear systems.
//!
//! The plant is `x_{t+1} = a*x_t + b*u_t + w_t` with unknown `(a*, b*)`,
//! quadratic per-step cost `q*x^2 + r*u^2`, and an expected-state safety
//! constraint `D_L <= a*x_t + b*u_t <= D_U` that must hold at every step.
//! The library provides:
//!
//! - the truncated linear controller class and its robust safety clamps
//!   ([`control`]),
//! - closed-form scalar LQR quantities ([`analytic`]),
//! - Monte Carlo cost evaluation and gain search with common random numbers
//!   ([`oracle`]),
//! - online regularized least squares with a self-normalized confidence
//!   radius ([`sysid`]),
//! - the epoch-doubling safe learning controller itself ([`algorithm`]),
//! - and an experiment harness for regret sweeps, safety audits, and
//!   verification suites ([`harness`]).

// Several operations mirror external contracts whose natural signatures
// take many scalars.
#![allow(clippy::too_many_arguments)]

pub mod algorithm;
pub mod analytic;
pub mod control;
pub mod domain;
pub mod harness;
pub mod noise;
pub mod oracle;
pub mod stream;
pub mod sysid;

mod error;

pub use domain::{CostParams, Dynamics, ExperimentConfig, SafetyBounds, UncertaintyBox};
pub use error::Error;
pub use noise::NoiseModel;

/// Library-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

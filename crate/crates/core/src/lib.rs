//! Distributed online convex optimization with time-varying, nonseparable
//! coupled constraints.
//!
//! Agents on a fixed undirected graph each keep a *belief* about the whole
//! joint decision together with a dual estimate, average both with their
//! neighbours through a doubly stochastic mixing matrix, act on their own
//! block of the averaged belief, and then take a projected primal step on
//! their own block and a projected dual ascent step. A decision-sharing
//! consensus baseline for separable problems is included for comparison,
//! together with the metrics (static regret, cumulative constraint
//! violation, consensus error) and the experiment harness that fits their
//! growth exponents over horizon sweeps.

pub mod baseline;
pub mod dopbc;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod netgraph;
pub mod problems;

pub use error::{Error, Result};

/// Dense column vector used for beliefs, duals and gradients.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for mixing matrices and Jacobians.
pub type Matrix = nalgebra::DMatrix<f64>;

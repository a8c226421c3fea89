//! Adaptive-basis actor-critic learning for average-reward MDPs.
//!
//! The critic represents the differential value function as
//! `J(x) ≈ φ(x, s)ᵀ r`, linear in the weights `r` and nonlinear in the basis
//! parameters `s`. Three learners adapt `s` on the slowest stochastic
//! approximation time scale:
//!
//! * ABTD follows the bootstrapped TD gradient,
//! * ABBE descends the mean squared TD error,
//! * ABPBE descends the mean squared projected Bellman error using a bank of
//!   fast estimators.
//!
//! Every quantity the learners estimate is also computed exactly by
//! [`mdp`] for finite chains, and [`oracle`] cross-checks each analytic
//! derivative against finite differences.

pub mod algorithms;
pub mod basis;
pub mod checkpoint;
pub mod env;
mod error;
pub mod experiment;
pub mod mdp;
pub mod oracle;

pub use error::{Error, Result};

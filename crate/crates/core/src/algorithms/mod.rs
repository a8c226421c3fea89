//! Adaptive-basis actor-critic learners, the static-basis and SARSA
//! baselines, and step-size schedules.
//!
//! All learners share the average-reward and actor iterates
//!
//! ```text
//! η ← η + α⁽³⁾ (g − η)
//! θ ← H_θ[θ + α⁽²⁾ ψ d]
//! ```
//!
//! and differ in how the critic weights `r` and the basis parameters `s`
//! move. Every quantity inside a step (`d`, `φ`, `φ′`, `ψ`, Jacobians) is
//! evaluated at the pre-step parameters, so a step is a pure function of
//! the learner state, the sample and the step index.

mod estimators;
mod learner;
mod sarsa;
mod schedule;

pub use estimators::{BankVariant, EstimatorBank};
pub use learner::{ActorCritic, Directions, Fault, Learner, LearnerOptions, DEFAULT_BURN_IN, THETA_BOX};
pub use sarsa::{Sarsa, SarsaConfig, SarsaTransition};
pub use schedule::{
    validate_schedule, PowerSchedule, RatioRow, ScheduleCheck, ScheduleReport, StepSchedule, TimeScale,
    RATIO_PROBES, SLOW_SEPARATION_RATIO,
};

use serde::{Deserialize, Serialize};

/// Learner variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Adaptive basis TD.
    Abtd,
    /// Adaptive basis for the Bellman error.
    Abbe,
    /// Adaptive basis for the projected Bellman error.
    Abpbe,
    /// Two-time-scale actor-critic on a fixed basis (ABTD with `α⁽¹⁾ ≡ 0`).
    StaticAc,
    /// Episodic SARSA on a fixed RBF grid; mountain car only.
    Sarsa,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Abtd => "abtd",
            Algorithm::Abbe => "abbe",
            Algorithm::Abpbe => "abpbe",
            Algorithm::StaticAc => "static-ac",
            Algorithm::Sarsa => "sarsa",
        }
    }

    pub fn adapts_basis(self) -> bool {
        matches!(self, Algorithm::Abtd | Algorithm::Abbe | Algorithm::Abpbe)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "abtd" => Ok(Algorithm::Abtd),
            "abbe" => Ok(Algorithm::Abbe),
            "abpbe" => Ok(Algorithm::Abpbe),
            "static-ac" => Ok(Algorithm::StaticAc),
            "sarsa" => Ok(Algorithm::Sarsa),
            other => Err(crate::Error::Parse(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// One observed transition `(x, u, g, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionSample<S> {
    pub x: S,
    pub u: usize,
    pub g: f64,
    pub y: S,
}

/// Coupled iterate `(η, r, θ, s)` and the step index `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState {
    pub eta: f64,
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
    pub s: Vec<f64>,
    pub step_count: u64,
}

impl LearnerState {
    /// `η₀ = 0`, `r₀ = 0`, `θ₀ = 0` (uniform policy) and the given `s₀`.
    pub fn initial(num_features: usize, actor_dim: usize, s0: Vec<f64>) -> Self {
        Self {
            eta: 0.0,
            r: vec![0.0; num_features],
            theta: vec![0.0; actor_dim],
            s: s0,
            step_count: 0,
        }
    }

    /// Name of the first iterate holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        if !self.eta.is_finite() {
            Some("eta")
        } else if !self.r.iter().all(|v| v.is_finite()) {
            Some("r")
        } else if !self.theta.iter().all(|v| v.is_finite()) {
            Some("theta")
        } else if !self.s.iter().all(|v| v.is_finite()) {
            Some("s")
        } else {
            None
        }
    }
}

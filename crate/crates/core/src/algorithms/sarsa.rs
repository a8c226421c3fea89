use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{AdaptiveBasis, RbfBasis};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SarsaConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl Default for SarsaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            epsilon: 0.0,
            gamma: 1.0,
        }
    }
}

/// One SARSA transition; `next` is `None` when the episode terminated.
#[derive(Clone, Debug, PartialEq)]
pub struct SarsaTransition {
    pub x: [f64; 2],
    pub u: usize,
    pub reward: f64,
    pub next: Option<([f64; 2], usize)>,
}

/// Episodic SARSA(0) with ε-greedy actions over a fixed RBF grid.
#[derive(Clone, Debug)]
pub struct Sarsa {
    pub basis: RbfBasis,
    pub s: Vec<f64>,
    pub config: SarsaConfig,
    pub num_actions: usize,
    /// Action-major weights, `num_actions × M`.
    pub weights: Vec<f64>,
}

impl Sarsa {
    pub fn new(basis: RbfBasis, num_actions: usize, config: SarsaConfig) -> Self {
        let s = basis.default_params();
        let weights = vec![0.0; num_actions * basis.num_features()];
        Self {
            basis,
            s,
            config,
            num_actions,
            weights,
        }
    }

    pub fn action_values(&self, x: &[f64; 2]) -> Result<Vec<f64>> {
        let phi = self.basis.features(&self.s, x)?;
        Ok(self.values_from(&phi))
    }

    fn values_from(&self, phi: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(phi.len())
            .map(|w| w.iter().zip(phi).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// ε-greedy action; greedy ties are broken uniformly at random.
    pub fn select_action<R: Rng + ?Sized>(&self, x: &[f64; 2], rng: &mut R) -> Result<usize> {
        if rng.random::<f64>() < self.config.epsilon {
            return Ok(rng.random_range(0..self.num_actions));
        }
        let q = self.action_values(x)?;
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..q.len()).filter(|&a| q[a] == best).collect();
        Ok(ties[rng.random_range(0..ties.len())])
    }

    /// `w_u ← w_u + α (R + γ Q(y, u′) − Q(x, u)) φ(x)`.
    pub fn update(&mut self, t: &SarsaTransition) -> Result<()> {
        let phi = self.basis.features(&self.s, &t.x)?;
        let q = self.values_from(&phi)[t.u];
        let bootstrap = match &t.next {
            Some((y, u_next)) => self.config.gamma * self.action_values(y)?[*u_next],
            None => 0.0,
        };
        let delta = t.reward + bootstrap - q;
        let k = phi.len();
        let step = self.config.alpha * delta;
        for (w, p) in self.weights[t.u * k..(t.u + 1) * k].iter_mut().zip(&phi) {
            *w += step * p;
        }
        Ok(())
    }

    /// Pure form of [`Sarsa::update`].
    pub fn step(&self, t: &SarsaTransition) -> Result<Self> {
        let mut next = self.clone();
        next.update(t)?;
        Ok(next)
    }
}

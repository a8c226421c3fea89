use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::Rng;

use super::{AdaptiveBasis, FiniteBasis, ParamBox};
use crate::{Error, Result};

/// Default initial frequency `s₀`.
pub const DEFAULT_FREQUENCY: f64 = 0.5;

/// Box for the scalar frequency parameter.
pub const FREQUENCY_BOX: (f64, f64) = (0.01, 10.0);

/// Random-phase cosine features `φ_d(x, s) = cos(x·s/d + ρ_{x,d})` for
/// `d = 1..=K_r`, driven by a single scalar frequency `s`.
///
/// States are indexed from 0 but enter the formula by their 1-based label,
/// so state index `i` contributes `x = i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineBasis {
    num_states: usize,
    num_features: usize,
    /// Row-major `N × K_r` phase table.
    phases: Vec<f64>,
}

impl CosineBasis {
    /// Draws i.i.d. phases uniform on `[0, 2π)`.
    pub fn random<R: Rng + ?Sized>(num_states: usize, num_features: usize, rng: &mut R) -> Self {
        let phases = (0..num_states * num_features)
            .map(|_| rng.random_range(0.0..TAU))
            .collect();
        Self {
            num_states,
            num_features,
            phases,
        }
    }

    pub fn from_phases(num_states: usize, num_features: usize, phases: Vec<f64>) -> Result<Self> {
        if num_features == 0 {
            return Err(Error::InvalidModel("cosine basis needs at least one feature".into()));
        }
        if phases.len() != num_states * num_features {
            return Err(Error::DimensionMismatch {
                what: "phase table",
                expected: num_states * num_features,
                found: phases.len(),
            });
        }
        Ok(Self {
            num_states,
            num_features,
            phases,
        })
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    fn check(&self, s: &[f64], x: usize) -> Result<()> {
        if x >= self.num_states {
            return Err(Error::InvalidState(format!(
                "state {x} outside 0..{}",
                self.num_states
            )));
        }
        if s.len() != 1 {
            return Err(Error::DimensionMismatch {
                what: "cosine parameters",
                expected: 1,
                found: s.len(),
            });
        }
        Ok(())
    }
}

impl AdaptiveBasis for CosineBasis {
    type State = usize;

    fn num_features(&self) -> usize {
        self.num_features
    }

    fn num_params(&self) -> usize {
        1
    }

    fn default_params(&self) -> Vec<f64> {
        vec![DEFAULT_FREQUENCY]
    }

    fn param_box(&self) -> ParamBox {
        ParamBox::uniform(1, FREQUENCY_BOX.0, FREQUENCY_BOX.1)
    }

    fn features_into(&self, s: &[f64], x: &usize, out: &mut [f64]) -> Result<()> {
        self.check(s, *x)?;
        let label = (*x + 1) as f64;
        let phases = &self.phases[x * self.num_features..(x + 1) * self.num_features];
        for (d, (o, rho)) in out.iter_mut().zip(phases).enumerate() {
            *o = (label * s[0] / (d + 1) as f64 + rho).cos();
        }
        Ok(())
    }

    fn jacobian_into(&self, s: &[f64], x: &usize, out: &mut DMatrix<f64>) -> Result<()> {
        self.check(s, *x)?;
        let label = (*x + 1) as f64;
        let phases = &self.phases[x * self.num_features..(x + 1) * self.num_features];
        for (d, rho) in phases.iter().enumerate() {
            let freq = label / (d + 1) as f64;
            out[(d, 0)] = -freq * (freq * s[0] + rho).sin();
        }
        Ok(())
    }

    fn param_gradient_into(&self, s: &[f64], x: &usize, r: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(s, *x)?;
        let label = (*x + 1) as f64;
        let phases = &self.phases[x * self.num_features..(x + 1) * self.num_features];
        out[0] = phases
            .iter()
            .zip(r)
            .enumerate()
            .map(|(d, (rho, w))| {
                let freq = label / (d + 1) as f64;
                -freq * (freq * s[0] + rho).sin() * w
            })
            .sum();
        Ok(())
    }
}

impl FiniteBasis for CosineBasis {
    fn num_states(&self) -> usize {
        self.num_states
    }
}

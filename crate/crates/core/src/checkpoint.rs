//! Versioned plain-text checkpoints of a running learner.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! restored run continues bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algorithms::{Algorithm, EstimatorBank, LearnerState, PowerSchedule, StepSchedule, TimeScale};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "abac-checkpoint v1";

/// Everything needed to resume a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub algorithm: Algorithm,
    /// Seed of the run's random stream.
    pub seed: u64,
    /// Word position of the stream at the time of the checkpoint.
    pub rng_word_pos: u128,
    pub schedule: StepSchedule,
    pub state: LearnerState,
    pub bank: Option<EstimatorBank>,
    /// Current environment state, flattened.
    pub env_state: Vec<f64>,
}

impl Checkpoint {
    /// Rebuilds the random stream at the recorded position.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(self.rng_word_pos);
        rng
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, key: &str, vals: &[f64]| {
            write!(out, "{key}").unwrap();
            for v in vals {
                write!(out, " {v}").unwrap();
            }
            writeln!(out).unwrap();
        };
        writeln!(out, "{CHECKPOINT_FORMAT}").unwrap();
        writeln!(out, "algorithm {}", self.algorithm.name()).unwrap();
        writeln!(out, "seed {}", self.seed).unwrap();
        writeln!(out, "rng_word_pos {}", self.rng_word_pos).unwrap();
        for scale in TimeScale::ALL {
            let s = self.schedule.get(scale);
            line(
                &mut out,
                &format!("schedule.{}", scale_key(scale)),
                &[s.coefficient, s.offset, s.exponent],
            );
        }
        writeln!(out, "step_count {}", self.state.step_count).unwrap();
        line(&mut out, "eta", &[self.state.eta]);
        line(&mut out, "r", &self.state.r);
        line(&mut out, "theta", &self.state.theta);
        line(&mut out, "s", &self.state.s);
        line(&mut out, "env_state", &self.env_state);
        if let Some(bank) = &self.bank {
            writeln!(out, "bank.updates {}", bank.updates).unwrap();
            line(&mut out, "bank.a", bank.a.as_slice());
            for (i, m) in bank.a_s.iter().enumerate() {
                line(&mut out, &format!("bank.a_s.{i}"), m.as_slice());
            }
            for (i, v) in bank.b_s.iter().enumerate() {
                line(&mut out, &format!("bank.b_s.{i}"), v.as_slice());
            }
            line(&mut out, "bank.w", bank.w.as_slice());
            for (i, v) in bank.w_r.iter().enumerate() {
                line(&mut out, &format!("bank.w_r.{i}"), v.as_slice());
            }
            for (i, v) in bank.w_s.iter().enumerate() {
                line(&mut out, &format!("bank.w_s.{i}"), v.as_slice());
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Parse(format!("expected header {CHECKPOINT_FORMAT:?}")));
        }
        let mut entries = std::collections::BTreeMap::new();
        for line in lines {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            if entries.insert(key.to_string(), rest.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("duplicate key {key:?}")));
            }
        }
        let raw = |key: &str| -> Result<&str> {
            entries
                .get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::Parse(format!("missing key {key:?}")))
        };
        let int = |key: &str| -> Result<u128> {
            raw(key)?
                .parse()
                .map_err(|_| Error::Parse(format!("bad integer for {key:?}")))
        };
        let floats = |key: &str| -> Result<Vec<f64>> {
            raw(key)?
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad float {v:?} in {key:?}"))))
                .collect()
        };

        let algorithm: Algorithm = raw("algorithm")?.parse()?;
        let mut schedule = StepSchedule::default();
        for scale in TimeScale::ALL {
            let key = format!("schedule.{}", scale_key(scale));
            match floats(&key)?.as_slice() {
                &[c, o, p] => *schedule.get_mut(scale) = PowerSchedule::new(c, o, p),
                _ => return Err(Error::Parse(format!("{key} needs three values"))),
            }
        }
        let eta = match floats("eta")?.as_slice() {
            &[e] => e,
            _ => return Err(Error::Parse("eta needs one value".into())),
        };
        let state = LearnerState {
            eta,
            r: floats("r")?,
            theta: floats("theta")?,
            s: floats("s")?,
            step_count: to_u64(int("step_count")?)?,
        };

        let bank = if entries.contains_key("bank.updates") {
            let k = state.r.len();
            let ks = state.s.len();
            let vector = |key: &str| -> Result<DVector<f64>> {
                let v = floats(key)?;
                check_len(key, k, v.len())?;
                Ok(DVector::from_vec(v))
            };
            let matrix = |key: &str| -> Result<DMatrix<f64>> {
                let v = floats(key)?;
                check_len(key, k * k, v.len())?;
                Ok(DMatrix::from_vec(k, k, v))
            };
            Some(EstimatorBank {
                a: matrix("bank.a")?,
                a_s: (0..ks).map(|i| matrix(&format!("bank.a_s.{i}"))).collect::<Result<_>>()?,
                b_s: (0..ks).map(|i| vector(&format!("bank.b_s.{i}"))).collect::<Result<_>>()?,
                w: vector("bank.w")?,
                w_r: (0..k).map(|i| vector(&format!("bank.w_r.{i}"))).collect::<Result<_>>()?,
                w_s: (0..ks).map(|i| vector(&format!("bank.w_s.{i}"))).collect::<Result<_>>()?,
                updates: to_u64(int("bank.updates")?)?,
            })
        } else {
            None
        };

        Ok(Self {
            algorithm,
            seed: to_u64(int("seed")?)?,
            rng_word_pos: int("rng_word_pos")?,
            schedule,
            state,
            bank,
            env_state: floats("env_state")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn scale_key(scale: TimeScale) -> &'static str {
    match scale {
        TimeScale::Basis => "basis",
        TimeScale::Actor => "actor",
        TimeScale::Critic => "critic",
        TimeScale::Estimator => "estimator",
    }
}

fn to_u64(v: u128) -> Result<u64> {
    u64::try_from(v).map_err(|_| Error::Parse(format!("{v} does not fit in 64 bits")))
}

fn check_len(key: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Parse(format!("{key}: expected {expected} values, found {found}")))
    }
}

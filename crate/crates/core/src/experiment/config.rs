use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{validate_schedule, Algorithm, LearnerOptions, PowerSchedule, SarsaConfig, StepSchedule};
use crate::env::{GarnetSpec, MountainCarParams, RewardMode};
use crate::oracle::ValidationOptions;
use crate::{Error, Result};

/// Experiment families.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Learning curves on random Garnet MDPs.
    #[default]
    Garnet,
    /// Steps-to-goal per episode on the mountain car.
    MountainCar,
    /// ABTD on Garnet with separated time scales against one shared scale.
    MtsVsSts,
    /// The oracle audit suite.
    Validate,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "garnet" => Ok(Self::Garnet),
            "mountain-car" => Ok(Self::MountainCar),
            "mts-vs-sts" => Ok(Self::MtsVsSts),
            "validate" => Ok(Self::Validate),
            other => Err(Error::Config(format!("unknown experiment kind {other:?}"))),
        }
    }
}

/// Mountain-car experiment settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MountainCarConfig {
    pub params: MountainCarParams,
    pub episodes: usize,
    /// RBF count for learners that adapt the basis.
    pub adaptive_centers: usize,
    /// RBF count for the fixed-basis learners.
    pub fixed_centers: usize,
    pub sarsa: SarsaConfig,
}

impl Default for MountainCarConfig {
    fn default() -> Self {
        Self {
            params: MountainCarParams::default(),
            episodes: 5000,
            adaptive_centers: 16,
            fixed_centers: 64,
            sarsa: SarsaConfig::default(),
        }
    }
}

/// A complete experiment description; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub algorithms: Vec<Algorithm>,
    /// Critic basis sizes `K_r`; one series per size and algorithm.
    pub num_features: Vec<usize>,
    pub horizon: u64,
    pub repeats: usize,
    pub seed: u64,
    pub output: PathBuf,
    /// Steps between exact-objective probes.
    pub eval_interval: u64,
    /// Largest fraction of failed repeats with which an aggregate is valid.
    pub max_failure_fraction: f64,
    pub schedule: StepSchedule,
    /// Shared schedule of the single-time-scale series.
    pub single_scale: PowerSchedule,
    pub learner: LearnerOptions,
    pub garnet: GarnetSpec,
    pub reward_mode: RewardMode,
    pub mountain_car: MountainCarConfig,
    pub validation: ValidationOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Garnet,
            algorithms: vec![Algorithm::Abtd, Algorithm::StaticAc],
            num_features: vec![4],
            horizon: 200_000,
            repeats: 20,
            seed: 0,
            output: PathBuf::from("results"),
            eval_interval: 1000,
            max_failure_fraction: 0.1,
            schedule: StepSchedule::default(),
            single_scale: PowerSchedule::new(5.0, 1000.0, 0.8),
            learner: LearnerOptions::default(),
            garnet: GarnetSpec::default(),
            reward_mode: RewardMode::State,
            mountain_car: MountainCarConfig::default(),
            validation: ValidationOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks the config invariants.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.repeats == 0 {
            return fail("repeats must be at least 1".into());
        }
        if self.eval_interval == 0 {
            return fail("eval_interval must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return fail(format!("max_failure_fraction {} outside [0, 1]", self.max_failure_fraction));
        }
        if self.kind == ExperimentKind::Validate {
            return Ok(());
        }
        let report = validate_schedule(&self.schedule);
        if !report.passed {
            let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            return fail(format!("step schedule violates: {}", failed.join("; ")));
        }
        let (lo, hi) = self.learner.theta_box;
        if !(lo < hi) {
            return fail(format!("empty theta box [{lo}, {hi}]"));
        }
        match self.kind {
            ExperimentKind::Garnet | ExperimentKind::MtsVsSts => {
                self.garnet.validate()?;
                if self.num_features.is_empty() {
                    return fail("num_features is empty".into());
                }
                if let Some(&k) = self.num_features.iter().find(|&&k| k == 0 || k > self.garnet.states) {
                    return fail(format!("num_features {k} outside 1..={}", self.garnet.states));
                }
                if self.kind == ExperimentKind::Garnet {
                    if self.algorithms.is_empty() {
                        return fail("no algorithms selected".into());
                    }
                    if self.algorithms.contains(&Algorithm::Sarsa) {
                        return fail("sarsa runs on the mountain car only".into());
                    }
                }
                let s = self.single_scale;
                if !(s.coefficient > 0.0 && s.offset > 0.0 && s.exponent > 0.5 && s.exponent <= 1.0) {
                    return fail(format!("single_scale {s:?} violates the step-size conditions"));
                }
            }
            ExperimentKind::MountainCar => {
                let mc = &self.mountain_car;
                if self.algorithms.is_empty() {
                    return fail("no algorithms selected".into());
                }
                if mc.adaptive_centers == 0 || mc.fixed_centers == 0 {
                    return fail("RBF counts must be positive".into());
                }
                if mc.params.max_episode_steps == Some(0) {
                    return fail("max_episode_steps must be positive".into());
                }
                if !(mc.sarsa.alpha >= 0.0 && (0.0..=1.0).contains(&mc.sarsa.epsilon)) {
                    return fail(format!("invalid sarsa settings {:?}", mc.sarsa));
                }
            }
            ExperimentKind::Validate => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "kind = \"mountain-car\"\nalgorithms = [\"abtd\", \"sarsa\"]\n[mountain_car]\nepisodes = 10\n",
        )
        .unwrap();
        assert_eq!(cfg.kind, ExperimentKind::MountainCar);
        assert_eq!(cfg.mountain_car.episodes, 10);
        assert_eq!(cfg.mountain_car.fixed_centers, 64);
        assert_eq!(cfg.horizon, 200_000);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ExperimentConfig::from_toml("horizon = \"long\"").is_err());
        assert!(ExperimentConfig::from_toml("unknown_key = 1").is_err());
        let bad = [
            ExperimentConfig { repeats: 0, ..Default::default() },
            ExperimentConfig { num_features: vec![31], ..Default::default() },
            ExperimentConfig { algorithms: vec![Algorithm::Sarsa], ..Default::default() },
            ExperimentConfig {
                schedule: StepSchedule::single_time_scale(PowerSchedule::new(1.0, 1.0, 0.7)),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}

//! Config-driven experiment runner: seeded repeats in parallel, per-repeat
//! CSV curves, aggregates and a manifest.
//!
//! Output layout under `output/`:
//!
//! ```text
//! manifest.json
//! <series>/repeat_000.csv     learning curve or episode lengths
//! <series>/params_000.csv     final basis parameters (mountain car)
//! <series>/aggregate.csv      mean and standard error over repeats
//! validation.json             validate runs only
//! ```

mod config;
pub mod output;
mod runner;

pub use config::{ExperimentConfig, ExperimentKind, MountainCarConfig};
pub use runner::{
    car_actor_critic, execute, garnet_problem, plan_series, probe, repeat_seeds, run_garnet_repeat,
    run_mountain_car_repeat, stream_seed, CarActorCritic, CarSeries, CurveRow, EpisodeRepeat, GarnetActorCritic,
    GarnetRepeat, GarnetSeries, SeriesOutcome, SeriesPlan, SeriesRepeats,
};

use serde::{Deserialize, Serialize};

use crate::algorithms::Algorithm;
use crate::oracle::{run_validation, ValidationReport};
use crate::Result;

pub const MANIFEST_FORMAT: &str = "abac-manifest v1";

/// Episodes averaged for the final steps-to-goal metric.
pub const FINAL_EPISODE_WINDOW: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatManifest {
    pub index: usize,
    pub seed: u64,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminal_exact_eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_mean_steps: Option<f64>,
    pub final_params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesManifest {
    pub name: String,
    pub algorithm: Algorithm,
    pub num_features: usize,
    pub failed: usize,
    /// False when more than the allowed fraction of repeats failed.
    pub aggregate_valid: bool,
    pub repeats: Vec<RepeatManifest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub series: Vec<SeriesManifest>,
    /// Every series met the failure quorum.
    pub quorum_ok: bool,
}

/// Result of [`run_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub enum RunOutcome {
    Experiment(Manifest),
    Validation(ValidationReport),
}

fn quorum(failed: usize, total: usize, max_fraction: f64) -> bool {
    total == 0 || (failed as f64) <= max_fraction * total as f64
}

/// Builds the manifest of executed series.
pub fn manifest(cfg: &ExperimentConfig, outcomes: &[SeriesOutcome]) -> Manifest {
    let series: Vec<SeriesManifest> = outcomes
        .iter()
        .map(|o| {
            let (algorithm, num_features, repeats) = match (&o.plan, &o.repeats) {
                (SeriesPlan::Garnet(p), SeriesRepeats::Garnet(reps)) => (
                    p.algorithm,
                    p.num_features,
                    reps.iter()
                        .map(|r| RepeatManifest {
                            index: r.index,
                            seed: r.seed,
                            failed: r.failure.is_some(),
                            error: r.failure.clone(),
                            terminal_exact_eta: r.terminal_exact_eta(),
                            final_mean_steps: None,
                            final_params: r.final_state.s.clone(),
                        })
                        .collect::<Vec<_>>(),
                ),
                (SeriesPlan::Car(p), SeriesRepeats::Car(reps)) => (
                    p.algorithm,
                    p.centers,
                    reps.iter()
                        .map(|r| RepeatManifest {
                            index: r.index,
                            seed: r.seed,
                            failed: r.failure.is_some(),
                            error: r.failure.clone(),
                            terminal_exact_eta: None,
                            final_mean_steps: r.final_mean_steps(FINAL_EPISODE_WINDOW),
                            final_params: r.final_params.clone(),
                        })
                        .collect(),
                ),
                _ => unreachable!("plan and repeats share a family"),
            };
            let failed = o.failed();
            SeriesManifest {
                name: o.plan.name().to_string(),
                algorithm,
                num_features,
                failed,
                aggregate_valid: quorum(failed, o.len(), cfg.max_failure_fraction),
                repeats,
            }
        })
        .collect();
    Manifest {
        format: MANIFEST_FORMAT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        seeds: repeat_seeds(cfg),
        quorum_ok: series.iter().all(|s| s.aggregate_valid),
        series,
    }
}

/// Writes every per-repeat file, the aggregates and the manifest.
pub fn write_outputs(cfg: &ExperimentConfig, outcomes: &[SeriesOutcome]) -> Result<Manifest> {
    let root = &cfg.output;
    for o in outcomes {
        let dir = root.join(o.plan.name());
        match &o.repeats {
            SeriesRepeats::Garnet(reps) => {
                let ks = 1;
                for r in reps {
                    output::write(&dir.join(format!("repeat_{:03}.csv", r.index)), &output::curve_csv(r, ks))?;
                }
                let ok: Vec<&GarnetRepeat> = reps.iter().filter(|r| r.failure.is_none()).collect();
                output::write(&dir.join("aggregate.csv"), &output::curve_aggregate_csv(&ok, ks))?;
            }
            SeriesRepeats::Car(reps) => {
                for r in reps {
                    output::write(&dir.join(format!("repeat_{:03}.csv", r.index)), &output::episodes_csv(r))?;
                    output::write(
                        &dir.join(format!("params_{:03}.csv", r.index)),
                        &output::params_csv(&r.final_params),
                    )?;
                }
                let ok: Vec<&EpisodeRepeat> = reps.iter().filter(|r| r.failure.is_none()).collect();
                output::write(&dir.join("aggregate.csv"), &output::episodes_aggregate_csv(&ok))?;
            }
        }
    }
    let manifest = manifest(cfg, outcomes);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| crate::Error::Parse(e.to_string()))?;
    output::write(&root.join("manifest.json"), &(json + "\n"))?;
    Ok(manifest)
}

/// Validates `cfg`, runs it and writes its outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    if cfg.kind == ExperimentKind::Validate {
        let report = run_validation(&cfg.validation)?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| crate::Error::Parse(e.to_string()))?;
        output::write(&cfg.output.join("validation.json"), &(json + "\n"))?;
        return Ok(RunOutcome::Validation(report));
    }
    let outcomes = execute(cfg)?;
    Ok(RunOutcome::Experiment(write_outputs(cfg, &outcomes)?))
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{ExperimentConfig, ExperimentKind};
use crate::algorithms::{
    ActorCritic, Algorithm, Learner, LearnerOptions, LearnerState, Sarsa, SarsaConfig, SarsaTransition, StepSchedule,
    TransitionSample,
};
use crate::basis::{AdaptiveBasis, BlockActorFeatures, CosineBasis, RbfBasis};
use crate::env::{
    derive_seed, garnet_actor_features, generate_ergodic_garnet, mountain_car_step, Environment, GarnetInstance,
    GarnetSpec, MountainCar, MountainCarParams, MountainCarState, RewardMode, CAR_ACTIONS,
};
use crate::mdp::{FeatureTable, FiniteMdp};
use crate::oracle::{chain_at, objectives_at};
use crate::{Error, Result};

/// Garnet learner over a cosine critic basis and block one-hot actor.
pub type GarnetActorCritic = ActorCritic<CosineBasis, FeatureTable>;

/// Mountain-car learner over an RBF critic basis.
pub type CarActorCritic = ActorCritic<RbfBasis, BlockActorFeatures<RbfBasis>>;

/// Builds the problem of one repeat: an ergodic Garnet instance from
/// `derive_seed(seed, 0)`, random cosine phases from `derive_seed(seed, 1)`,
/// and the actor features at the initial basis parameters.
pub fn garnet_problem(
    spec: &GarnetSpec,
    num_features: usize,
    seed: u64,
    schedule: StepSchedule,
    options: LearnerOptions,
) -> Result<(GarnetInstance, GarnetActorCritic)> {
    let garnet = generate_ergodic_garnet(spec, derive_seed(seed, 0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let basis = CosineBasis::random(spec.states, num_features, &mut rng);
    let actor = garnet_actor_features(&basis, &basis.default_params(), spec.actions)?;
    Ok((garnet, ActorCritic::new(basis, actor, schedule, options)))
}

/// Seed of the sampling stream of a repeat.
pub fn stream_seed(seed: u64) -> u64 {
    derive_seed(seed, 2)
}

/// One probe of a Garnet learning curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub step: u64,
    pub eta_estimate: f64,
    /// Exact average reward of the current policy.
    pub exact_eta: f64,
    pub mse: f64,
    pub msbe: f64,
    pub mspbe: f64,
    pub s: Vec<f64>,
}

/// Probes the exact quantities at `state`; entries that cannot be computed
/// (for example a rank-deficient basis) are NaN.
pub fn probe<B, F>(ac: &ActorCritic<B, F>, mdp: &FiniteMdp, state: &LearnerState) -> CurveRow
where
    B: crate::basis::FiniteBasis,
    F: crate::mdp::ActorFeatures<usize>,
{
    let chain = chain_at(ac, mdp, &state.theta).ok();
    let objectives = chain
        .as_ref()
        .and_then(|c| objectives_at(mdp, c, &ac.basis, &state.r, &state.s).ok());
    CurveRow {
        step: state.step_count,
        eta_estimate: state.eta,
        exact_eta: chain.as_ref().map_or(f64::NAN, |c| c.average_reward),
        mse: objectives.map_or(f64::NAN, |o| o.mse),
        msbe: objectives.map_or(f64::NAN, |o| o.msbe),
        mspbe: objectives.map_or(f64::NAN, |o| o.mspbe),
        s: state.s.clone(),
    }
}

/// A Garnet series: one algorithm, basis size and schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct GarnetSeries {
    pub name: String,
    pub algorithm: Algorithm,
    pub garnet: GarnetSpec,
    pub reward_mode: RewardMode,
    pub num_features: usize,
    pub schedule: StepSchedule,
    pub options: LearnerOptions,
    pub horizon: u64,
    pub eval_interval: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GarnetRepeat {
    pub index: usize,
    pub seed: u64,
    /// Seed that produced the ergodic instance.
    pub instance_seed: u64,
    pub rows: Vec<CurveRow>,
    pub final_state: LearnerState,
    /// Divergence diagnostics; the repeat is excluded from aggregates.
    pub failure: Option<String>,
}

impl GarnetRepeat {
    pub fn terminal_exact_eta(&self) -> Option<f64> {
        self.rows.last().map(|r| r.exact_eta)
    }
}

/// Runs one repeat of `series` with the paired seed `seed`.
pub fn run_garnet_repeat(series: &GarnetSeries, index: usize, seed: u64) -> Result<GarnetRepeat> {
    let (garnet, ac) = garnet_problem(
        &series.garnet,
        series.num_features,
        seed,
        series.schedule,
        series.options.clone(),
    )?;
    let env = garnet.clone().with_reward_mode(series.reward_mode);
    let mut learner = Learner::new(ac, series.algorithm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed));
    let mut x = env.initial_state(&mut rng);
    let mut rows = Vec::new();
    let mut failure = None;
    let interval = series.eval_interval.max(1);
    for n in 0..=series.horizon {
        if series.horizon > 0 && (n % interval == 0 || n == series.horizon) {
            rows.push(probe(&learner.ac, &garnet.mdp, &learner.state));
        }
        if n == series.horizon {
            break;
        }
        let u = learner.select_action(&x, &mut rng);
        let out = env.transition(&x, u, &mut rng)?;
        if let Err(e) = learner.step(&TransitionSample { x, u, g: out.reward, y: out.next }) {
            match e {
                Error::NonFiniteUpdate { .. } => {
                    failure = Some(e.to_string());
                    break;
                }
                other => return Err(other),
            }
        }
        x = out.next;
    }
    Ok(GarnetRepeat {
        index,
        seed,
        instance_seed: garnet.seed,
        rows,
        final_state: learner.state,
        failure,
    })
}

/// A mountain-car series.
#[derive(Clone, Debug, PartialEq)]
pub struct CarSeries {
    pub name: String,
    pub algorithm: Algorithm,
    pub centers: usize,
    pub params: MountainCarParams,
    pub episodes: usize,
    pub schedule: StepSchedule,
    pub options: LearnerOptions,
    pub sarsa: SarsaConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRepeat {
    pub index: usize,
    pub seed: u64,
    /// Steps of each completed (or cut-off) episode.
    pub steps: Vec<u64>,
    /// Basis parameters at the end of the run.
    pub final_params: Vec<f64>,
    pub failure: Option<String>,
}

impl EpisodeRepeat {
    /// Mean steps over the last `window` episodes.
    pub fn final_mean_steps(&self, window: usize) -> Option<f64> {
        let tail = &self.steps[self.steps.len().saturating_sub(window)..];
        (!tail.is_empty()).then(|| tail.iter().sum::<u64>() as f64 / tail.len() as f64)
    }
}

pub fn car_actor_critic(series: &CarSeries) -> Result<CarActorCritic> {
    let basis = RbfBasis::with_centers(series.centers, series.params.state_bounds())?;
    let actor = BlockActorFeatures::new(basis.clone(), basis.default_params(), CAR_ACTIONS.len())?;
    Ok(ActorCritic::new(basis, actor, series.schedule, series.options.clone()))
}

pub fn run_mountain_car_repeat(series: &CarSeries, index: usize, seed: u64) -> Result<EpisodeRepeat> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed));
    let env = MountainCar::new(series.params);
    let cap = series.params.max_episode_steps.unwrap_or(u64::MAX);
    let mut steps = Vec::with_capacity(series.episodes);
    let mut failure = None;

    if series.algorithm == Algorithm::Sarsa {
        let basis = RbfBasis::with_centers(series.centers, series.params.state_bounds())?;
        let mut sarsa = Sarsa::new(basis, CAR_ACTIONS.len(), series.sarsa);
        while steps.len() < series.episodes {
            let mut x = env.reset(&mut rng);
            let mut u = sarsa.select_action(&x.as_array(), &mut rng)?;
            let mut t = 0;
            loop {
                let state = MountainCarState { position: x.position, velocity: x.velocity };
                let (next, reward, done) = mountain_car_step(&series.params, state, CAR_ACTIONS[u])?;
                t += 1;
                let follow = if done {
                    None
                } else {
                    Some((next.as_array(), sarsa.select_action(&next.as_array(), &mut rng)?))
                };
                sarsa.update(&SarsaTransition { x: x.as_array(), u, reward, next: follow })?;
                if !sarsa.weights.iter().all(|w| w.is_finite()) {
                    failure = Some(format!("non-finite SARSA weights in episode {}", steps.len()));
                    break;
                }
                match follow {
                    Some((_, u_next)) if t < cap => {
                        x = next;
                        u = u_next;
                    }
                    _ => break,
                }
            }
            steps.push(t);
            if failure.is_some() {
                break;
            }
        }
        return Ok(EpisodeRepeat {
            index,
            seed,
            steps,
            final_params: sarsa.s,
            failure,
        });
    }

    let mut learner = Learner::new(car_actor_critic(series)?, series.algorithm)?;
    let mut x = env.initial_state(&mut rng);
    let mut t = 0;
    while steps.len() < series.episodes {
        let u = learner.select_action(&x, &mut rng);
        let out = env.transition(&x, u, &mut rng)?;
        if let Err(e) = learner.step(&TransitionSample { x, u, g: out.reward, y: out.next }) {
            match e {
                Error::NonFiniteUpdate { .. } | Error::WidthUnderflow { .. } => {
                    failure = Some(e.to_string());
                    break;
                }
                other => return Err(other),
            }
        }
        t += 1;
        x = out.next;
        if out.episode_end || t >= cap {
            steps.push(t);
            t = 0;
            if !out.episode_end {
                x = env.initial_state(&mut rng);
            }
        }
    }
    Ok(EpisodeRepeat {
        index,
        seed,
        steps,
        final_params: learner.state.s,
        failure,
    })
}

/// Series to run for a config.
#[derive(Clone, Debug, PartialEq)]
pub enum SeriesPlan {
    Garnet(GarnetSeries),
    Car(CarSeries),
}

impl SeriesPlan {
    pub fn name(&self) -> &str {
        match self {
            SeriesPlan::Garnet(s) => &s.name,
            SeriesPlan::Car(s) => &s.name,
        }
    }
}

pub fn plan_series(cfg: &ExperimentConfig) -> Vec<SeriesPlan> {
    let garnet = |name: String, algorithm, k, schedule| {
        SeriesPlan::Garnet(GarnetSeries {
            name,
            algorithm,
            garnet: cfg.garnet,
            reward_mode: cfg.reward_mode,
            num_features: k,
            schedule,
            options: cfg.learner.clone(),
            horizon: cfg.horizon,
            eval_interval: cfg.eval_interval,
        })
    };
    match cfg.kind {
        ExperimentKind::Garnet => cfg
            .num_features
            .iter()
            .flat_map(|&k| {
                cfg.algorithms
                    .iter()
                    .map(move |&alg| garnet(format!("{}-k{k}", alg.name()), alg, k, cfg.schedule))
            })
            .collect(),
        ExperimentKind::MtsVsSts => cfg
            .num_features
            .iter()
            .flat_map(|&k| {
                [
                    garnet(format!("abtd-mts-k{k}"), Algorithm::Abtd, k, cfg.schedule),
                    garnet(
                        format!("abtd-sts-k{k}"),
                        Algorithm::Abtd,
                        k,
                        StepSchedule::single_time_scale(cfg.single_scale),
                    ),
                ]
            })
            .collect(),
        ExperimentKind::MountainCar => cfg
            .algorithms
            .iter()
            .map(|&alg| {
                let centers = if alg.adapts_basis() {
                    cfg.mountain_car.adaptive_centers
                } else {
                    cfg.mountain_car.fixed_centers
                };
                SeriesPlan::Car(CarSeries {
                    name: format!("{}-m{centers}", alg.name()),
                    algorithm: alg,
                    centers,
                    params: cfg.mountain_car.params,
                    episodes: cfg.mountain_car.episodes,
                    schedule: cfg.schedule,
                    options: cfg.learner.clone(),
                    sarsa: cfg.mountain_car.sarsa,
                })
            })
            .collect(),
        ExperimentKind::Validate => Vec::new(),
    }
}

/// Results of one series, in repeat order.
#[derive(Clone, Debug, PartialEq)]
pub enum SeriesRepeats {
    Garnet(Vec<GarnetRepeat>),
    Car(Vec<EpisodeRepeat>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesOutcome {
    pub plan: SeriesPlan,
    pub repeats: SeriesRepeats,
}

impl SeriesOutcome {
    pub fn failed(&self) -> usize {
        match &self.repeats {
            SeriesRepeats::Garnet(r) => r.iter().filter(|r| r.failure.is_some()).count(),
            SeriesRepeats::Car(r) => r.iter().filter(|r| r.failure.is_some()).count(),
        }
    }

    pub fn len(&self) -> usize {
        match &self.repeats {
            SeriesRepeats::Garnet(r) => r.len(),
            SeriesRepeats::Car(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Paired per-repeat seeds `derive_seed(base, i)`.
pub fn repeat_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.repeats as u64).map(|i| derive_seed(cfg.seed, i)).collect()
}

enum JobResult {
    Garnet(GarnetRepeat),
    Car(EpisodeRepeat),
}

/// Runs every series and repeat of `cfg` in parallel; the result order is
/// fixed by series and repeat index.
pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<SeriesOutcome>> {
    cfg.validate()?;
    let plans = plan_series(cfg);
    let seeds = repeat_seeds(cfg);
    let jobs: Vec<(usize, usize)> = (0..plans.len())
        .flat_map(|p| (0..seeds.len()).map(move |i| (p, i)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(p, i)| match &plans[p] {
            SeriesPlan::Garnet(s) => run_garnet_repeat(s, i, seeds[i]).map(JobResult::Garnet),
            SeriesPlan::Car(s) => run_mountain_car_repeat(s, i, seeds[i]).map(JobResult::Car),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut results = results.into_iter();
    Ok(plans
        .into_iter()
        .map(|plan| {
            let chunk: Vec<JobResult> = results.by_ref().take(seeds.len()).collect();
            let repeats = match plan {
                SeriesPlan::Garnet(_) => SeriesRepeats::Garnet(
                    chunk
                        .into_iter()
                        .map(|r| match r {
                            JobResult::Garnet(g) => g,
                            JobResult::Car(_) => unreachable!(),
                        })
                        .collect(),
                ),
                SeriesPlan::Car(_) => SeriesRepeats::Car(
                    chunk
                        .into_iter()
                        .map(|r| match r {
                            JobResult::Car(c) => c,
                            JobResult::Garnet(_) => unreachable!(),
                        })
                        .collect(),
                ),
            };
            SeriesOutcome { plan, repeats }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_series(algorithm: Algorithm, horizon: u64) -> GarnetSeries {
        GarnetSeries {
            name: "t".into(),
            algorithm,
            garnet: GarnetSpec::new(6, 2, 2, 0.1),
            reward_mode: RewardMode::State,
            num_features: 2,
            schedule: StepSchedule::default(),
            options: LearnerOptions { burn_in: 20, ..LearnerOptions::default() },
            horizon,
            eval_interval: 100,
        }
    }

    #[test]
    fn curve_has_probe_grid() {
        let rep = run_garnet_repeat(&small_series(Algorithm::Abtd, 1050), 0, 7).unwrap();
        let steps: Vec<u64> = rep.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps.first(), Some(&0));
        assert_eq!(steps.last(), Some(&1050));
        assert_eq!(steps.len(), 12);
        assert!(rep.failure.is_none());
        assert!(rep.rows.iter().all(|r| r.exact_eta.is_finite() && r.mspbe >= 0.0));
    }

    #[test]
    fn zero_horizon_yields_no_rows() {
        let rep = run_garnet_repeat(&small_series(Algorithm::Abpbe, 0), 0, 7).unwrap();
        assert!(rep.rows.is_empty());
    }

    #[test]
    fn paired_seeds_share_the_instance() {
        let a = run_garnet_repeat(&small_series(Algorithm::Abtd, 200), 0, 11).unwrap();
        let b = run_garnet_repeat(&small_series(Algorithm::StaticAc, 200), 0, 11).unwrap();
        assert_eq!(a.instance_seed, b.instance_seed);
        assert_eq!(a.rows[0], b.rows[0]);
    }

    #[test]
    fn mountain_car_episodes_are_counted() {
        let params = MountainCarParams { max_episode_steps: Some(300), ..MountainCarParams::default() };
        for algorithm in [Algorithm::Abtd, Algorithm::Sarsa] {
            let series = CarSeries {
                name: "c".into(),
                algorithm,
                centers: 16,
                params,
                episodes: 4,
                schedule: StepSchedule::default(),
                options: LearnerOptions::default(),
                sarsa: SarsaConfig::default(),
            };
            let rep = run_mountain_car_repeat(&series, 0, 3).unwrap();
            assert_eq!(rep.steps.len(), 4);
            assert!(rep.steps.iter().all(|&t| (1..=300).contains(&t)));
            assert_eq!(rep.final_params.len(), 64);
        }
    }
}

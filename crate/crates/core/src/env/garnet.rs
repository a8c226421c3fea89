use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Environment, Outcome};
use crate::basis::FiniteBasis;
use crate::mdp::{FeatureTable, FiniteMdp};
use crate::{Error, Result};

/// Header line of the text format.
pub const GARNET_FORMAT: &str = "garnet v1";

/// `garnet(X, U, B, σ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GarnetSpec {
    pub states: usize,
    pub actions: usize,
    pub branching: usize,
    pub sigma: f64,
}

impl Default for GarnetSpec {
    fn default() -> Self {
        Self::new(30, 4, 2, 0.1)
    }
}

impl GarnetSpec {
    pub fn new(states: usize, actions: usize, branching: usize, sigma: f64) -> Self {
        Self {
            states,
            actions,
            branching,
            sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.actions == 0 {
            return Err(Error::Config("garnet needs at least one state and one action".into()));
        }
        if self.branching == 0 || self.branching > self.states {
            return Err(Error::Config(format!(
                "branching factor {} outside 1..={}",
                self.branching, self.states
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("reward noise {} must be finite and >= 0", self.sigma)));
        }
        Ok(())
    }
}

/// Which mean the sampled reward at `(x, u)` is drawn around.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// `g(x) + σ ε`: the exact oracles see the sampled mean.
    #[default]
    State,
    /// `ḡ(x, u) + σ ε` with the per-pair means of the noise table.
    StateAction,
}

/// A generated Garnet problem: the finite MDP over state rewards `g(x)`
/// and the per-pair mean rewards `ḡ(x, u) ~ N(g(x), σ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GarnetInstance {
    pub spec: GarnetSpec,
    pub seed: u64,
    pub mdp: FiniteMdp,
    /// Row-major `X × U` table of `ḡ(x, u)`.
    pub mean_rewards: Vec<f64>,
    pub reward_mode: RewardMode,
    /// Sparse cumulative rows `(y, Σ_{y' ≤ y} P_u(y'|x))` for `(x, u)`.
    rows: Vec<Vec<(usize, f64)>>,
}

/// Builds `garnet(X, U, B, σ)` from `seed`: `g(x) ~ N(0, 1)`; for every
/// `(x, u)`, `B` distinct successors with probabilities from `B − 1` sorted
/// uniform cut points, then `ḡ(x, u) ~ N(g(x), σ²)`.
pub fn generate_garnet(spec: &GarnetSpec, seed: u64) -> GarnetInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.states;
    let b = spec.branching.clamp(1, n.max(1));
    let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut transitions = vec![DMatrix::zeros(n, n); spec.actions];
    let mut mean_rewards = vec![0.0; n * spec.actions];
    for x in 0..n {
        for u in 0..spec.actions {
            let successors = sample_indices(&mut rng, n, b).into_vec();
            let mut cuts: Vec<f64> = (0..b - 1).map(|_| rng.random::<f64>()).collect();
            cuts.sort_by(f64::total_cmp);
            let mut prev = 0.0;
            for (k, &y) in successors.iter().enumerate() {
                let edge = if k + 1 == b { 1.0 } else { cuts[k] };
                transitions[u][(x, y)] += edge - prev;
                prev = edge;
            }
            mean_rewards[x * spec.actions + u] = g[x] + spec.sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mdp = FiniteMdp::new(transitions, g).expect("garnet construction yields stochastic rows");
    let mut instance = GarnetInstance::from_mdp(mdp, RewardMode::State, spec.sigma);
    instance.spec = *spec;
    instance.seed = seed;
    instance.mean_rewards = mean_rewards;
    instance
}

/// SplitMix64 mix of `(base, index)` into an independent stream seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maximum regeneration attempts in [`generate_ergodic_garnet`].
pub const MAX_GARNET_ATTEMPTS: u64 = 1000;

/// Generates instances from seeds derived from `seed` until one has a
/// single closed class (so every softmax policy has a unique stationary
/// distribution). Returns the instance, whose `seed` field records the
/// seed that produced it.
pub fn generate_ergodic_garnet(spec: &GarnetSpec, seed: u64) -> Result<GarnetInstance> {
    spec.validate()?;
    for attempt in 0..MAX_GARNET_ATTEMPTS {
        let candidate = if attempt == 0 { seed } else { derive_seed(seed, attempt) };
        let instance = generate_garnet(spec, candidate);
        if instance.mdp.has_unique_stationary() {
            return Ok(instance);
        }
    }
    Err(Error::InvalidModel(format!(
        "no ergodic garnet found in {MAX_GARNET_ATTEMPTS} attempts from seed {seed}"
    )))
}

/// Block one-hot actor features `ξ(x, u) = (0, …, φ(x, s₀), …, 0)` with the
/// block for action `u` holding the critic basis at its initial parameters.
pub fn garnet_actor_features<B: FiniteBasis + ?Sized>(basis: &B, s0: &[f64], num_actions: usize) -> Result<FeatureTable> {
    let k = basis.num_features();
    let n = basis.num_states();
    let mut phi = vec![0.0; k];
    let mut table = FeatureTable::zeros(n, num_actions, k * num_actions);
    for x in 0..n {
        basis.features_into(s0, &x, &mut phi)?;
        for u in 0..num_actions {
            table.get_mut(x, u)[u * k..(u + 1) * k].copy_from_slice(&phi);
        }
    }
    Ok(table)
}

impl GarnetInstance {
    /// Wraps an arbitrary finite MDP; the per-pair mean rewards default to
    /// the state rewards.
    pub fn from_mdp(mdp: FiniteMdp, reward_mode: RewardMode, sigma: f64) -> Self {
        let n = mdp.num_states();
        let actions = mdp.num_actions();
        let mut rows = Vec::with_capacity(n * actions);
        for x in 0..n {
            for u in 0..actions {
                let p = mdp.transition(u);
                let mut acc = 0.0;
                let row: Vec<(usize, f64)> = (0..n)
                    .filter(|&y| p[(x, y)] > 0.0)
                    .map(|y| {
                        acc += p[(x, y)];
                        (y, acc)
                    })
                    .collect();
                rows.push(row);
            }
        }
        let mean_rewards = (0..n * actions).map(|i| mdp.rewards()[i / actions]).collect();
        Self {
            spec: GarnetSpec::new(n, actions, n, sigma),
            seed: 0,
            mdp,
            mean_rewards,
            reward_mode,
            rows,
        }
    }

    pub fn with_reward_mode(mut self, mode: RewardMode) -> Self {
        self.reward_mode = mode;
        self
    }

    pub fn mean_reward(&self, x: usize, u: usize) -> f64 {
        self.mean_rewards[x * self.spec.actions + u]
    }

    /// Number of nonzero entries in row `x` of `P_u`.
    pub fn row_support(&self, x: usize, u: usize) -> usize {
        self.rows[x * self.spec.actions + u].len()
    }

    pub fn sample_reward<R: Rng + ?Sized>(&self, x: usize, u: usize, rng: &mut R) -> f64 {
        let mean = match self.reward_mode {
            RewardMode::State => self.mdp.rewards()[x],
            RewardMode::StateAction => self.mean_reward(x, u),
        };
        if self.spec.sigma == 0.0 {
            mean
        } else {
            mean + self.spec.sigma * rng.sample::<f64, _>(StandardNormal)
        }
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, x: usize, u: usize, rng: &mut R) -> usize {
        let row = &self.rows[x * self.spec.actions + u];
        let draw: f64 = rng.random::<f64>() * row.last().map_or(1.0, |&(_, c)| c);
        row.iter()
            .find(|&&(_, c)| draw < c)
            .or(row.last())
            .map(|&(y, _)| y)
            .expect("transition rows are non-empty")
    }

    /// Versioned text encoding. The spec and seed determine the instance;
    /// `with_matrices` appends the full tables for auditing.
    pub fn to_text(&self, with_matrices: bool) -> String {
        let mut out = String::new();
        let s = &self.spec;
        writeln!(out, "{GARNET_FORMAT}").unwrap();
        writeln!(out, "states {}", s.states).unwrap();
        writeln!(out, "actions {}", s.actions).unwrap();
        writeln!(out, "branching {}", s.branching).unwrap();
        writeln!(out, "sigma {}", s.sigma).unwrap();
        writeln!(out, "seed {}", self.seed).unwrap();
        if with_matrices {
            let n = s.states;
            for x in 0..n {
                writeln!(out, "g {x} {}", self.mdp.rewards()[x]).unwrap();
            }
            for x in 0..n {
                for u in 0..s.actions {
                    write!(out, "p {u} {x}").unwrap();
                    let p = self.mdp.transition(u);
                    for y in (0..n).filter(|&y| p[(x, y)] > 0.0) {
                        write!(out, " {y}:{}", p[(x, y)]).unwrap();
                    }
                    writeln!(out).unwrap();
                    writeln!(out, "gbar {x} {u} {}", self.mean_reward(x, u)).unwrap();
                }
            }
        }
        out
    }

    /// Parses [`GarnetInstance::to_text`] output, regenerating from the
    /// spec and seed and verifying any tables present.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(GARNET_FORMAT) {
            return Err(Error::Parse(format!("expected header {GARNET_FORMAT:?}")));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing {name}")))?;
            line.strip_prefix(name)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| Error::Parse(format!("expected {name}, found {line:?}")))
        };
        let parse_usize = |v: String| v.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
        let states = parse_usize(field("states")?)?;
        let actions = parse_usize(field("actions")?)?;
        let branching = parse_usize(field("branching")?)?;
        let sigma: f64 = field("sigma")?.parse().map_err(|e: std::num::ParseFloatError| Error::Parse(e.to_string()))?;
        let seed: u64 = field("seed")?.parse().map_err(|e: std::num::ParseIntError| Error::Parse(e.to_string()))?;
        let spec = GarnetSpec::new(states, actions, branching, sigma);
        spec.validate()?;
        let instance = generate_garnet(&spec, seed);

        for line in lines {
            let mut parts = line.split_whitespace();
            let tag = parts.next().unwrap_or_default();
            let nums: Vec<&str> = parts.collect();
            let bad = || Error::Parse(format!("malformed line {line:?}"));
            let idx = |i: usize| -> Result<usize> { nums.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
            let val = |i: usize| -> Result<f64> { nums.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
            let mismatch = || Error::Parse(format!("table line {line:?} disagrees with regenerated instance"));
            match tag {
                "g" => {
                    let x = idx(0)?;
                    if x >= states || instance.mdp.rewards()[x] != val(1)? {
                        return Err(mismatch());
                    }
                }
                "gbar" => {
                    let (x, u) = (idx(0)?, idx(1)?);
                    if x >= states || u >= actions || instance.mean_reward(x, u) != val(2)? {
                        return Err(mismatch());
                    }
                }
                "p" => {
                    let (u, x) = (idx(0)?, idx(1)?);
                    if x >= states || u >= actions {
                        return Err(mismatch());
                    }
                    let p = instance.mdp.transition(u);
                    let mut listed = 0;
                    for entry in &nums[2..] {
                        let (y, v) = entry.split_once(':').ok_or_else(bad)?;
                        let y: usize = y.parse().map_err(|_| bad())?;
                        let v: f64 = v.parse().map_err(|_| bad())?;
                        if y >= states || p[(x, y)] != v {
                            return Err(mismatch());
                        }
                        listed += 1;
                    }
                    if listed != instance.row_support(x, u) {
                        return Err(mismatch());
                    }
                }
                _ => return Err(bad()),
            }
        }
        Ok(instance)
    }
}

impl Environment for GarnetInstance {
    type State = usize;

    fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(0..self.mdp.num_states())
    }

    fn transition(&self, x: &usize, u: usize, rng: &mut ChaCha8Rng) -> Result<Outcome<usize>> {
        if *x >= self.mdp.num_states() {
            return Err(Error::InvalidState(format!("garnet state {x}")));
        }
        if u >= self.mdp.num_actions() {
            return Err(Error::InvalidAction(u as i64));
        }
        let reward = self.sample_reward(*x, u, rng);
        let next = self.sample_next(*x, u, rng);
        Ok(Outcome {
            reward,
            next,
            episode_end: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{AdaptiveBasis, CosineBasis};

    #[test]
    fn rows_have_exactly_b_nonzeros() {
        let g = generate_garnet(&GarnetSpec::new(30, 4, 2, 0.1), 11);
        let mut rows = 0;
        for u in 0..4 {
            let p = g.mdp.transition(u);
            for x in 0..30 {
                let nz = (0..30).filter(|&y| p[(x, y)] > 0.0).count();
                assert_eq!(nz, 2);
                assert!((p.row(x).sum() - 1.0).abs() < 1e-12);
                rows += 1;
            }
        }
        assert_eq!(rows, 120);
    }

    #[test]
    fn full_branching_is_dense() {
        let g = generate_garnet(&GarnetSpec::new(7, 2, 7, 0.0), 3);
        for u in 0..2 {
            assert!(g.mdp.transition(u).iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn regeneration_is_deterministic() {
        let spec = GarnetSpec::new(12, 3, 3, 0.2);
        assert_eq!(generate_garnet(&spec, 42), generate_garnet(&spec, 42));
        assert_eq!(generate_garnet(&spec, 42).to_text(true), generate_garnet(&spec, 42).to_text(true));
        assert_ne!(generate_garnet(&spec, 42).mdp, generate_garnet(&spec, 43).mdp);
    }

    #[test]
    fn state_action_reward_statistics() {
        let g = generate_garnet(&GarnetSpec::new(5, 2, 2, 0.1), 9).with_reward_mode(RewardMode::StateAction);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 10_000;
        for (x, u) in [(0, 0), (3, 1)] {
            let mean: f64 = (0..draws).map(|_| g.sample_reward(x, u, &mut rng)).sum::<f64>() / draws as f64;
            assert!((mean - g.mean_reward(x, u)).abs() < 3.0 * 0.1 / 100.0);
        }
    }

    #[test]
    fn text_round_trip_and_tamper_detection() {
        let g = generate_garnet(&GarnetSpec::new(6, 2, 2, 0.1), 77);
        let text = g.to_text(true);
        assert_eq!(GarnetInstance::from_text(&text).unwrap(), g);
        assert_eq!(GarnetInstance::from_text(&g.to_text(false)).unwrap(), g);
        let tampered = text.replacen("g 0 ", "g 0 1", 1);
        assert!(GarnetInstance::from_text(&tampered).is_err());
        assert!(GarnetInstance::from_text("garnet v2\n").is_err());
    }

    #[test]
    fn ergodic_generation_has_single_class() {
        for seed in 0..10 {
            let g = generate_ergodic_garnet(&GarnetSpec::new(5, 2, 2, 0.1), seed).unwrap();
            assert!(g.mdp.has_unique_stationary());
        }
    }

    #[test]
    fn actor_features_are_block_one_hot() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = CosineBasis::random(30, 4, &mut rng);
        let s0 = basis.default_params();
        let table = garnet_actor_features(&basis, &s0, 4).unwrap();
        use crate::mdp::ActorFeatures;
        assert_eq!(table.dim(), 16);
        for x in 0..30 {
            let phi = basis.features(&s0, &x).unwrap();
            for u in 0..4 {
                let xi = table.get(x, u);
                assert_eq!(&xi[u * 4..(u + 1) * 4], phi.as_slice());
                for v in 0..4 {
                    if v != u {
                        let dot: f64 = xi.iter().zip(table.get(x, v)).map(|(a, b)| a * b).sum();
                        assert_eq!(dot, 0.0);
                    }
                }
            }
        }
        let single = garnet_actor_features(&basis, &s0, 1).unwrap();
        assert_eq!(single.get(2, 0), basis.features(&s0, &2).unwrap().as_slice());
    }
}

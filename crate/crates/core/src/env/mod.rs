//! Benchmark environments: Garnet random MDPs and the mountain car.

mod garnet;
mod mountain_car;

pub use garnet::{
    derive_seed, garnet_actor_features, generate_ergodic_garnet, generate_garnet, GarnetInstance, GarnetSpec,
    RewardMode,
};
pub use mountain_car::{mountain_car_step, MountainCar, MountainCarParams, MountainCarState, CAR_ACTIONS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algorithms::TransitionSample;
use crate::Result;

/// Outcome of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome<S> {
    pub reward: f64,
    pub next: S,
    /// The transition reached a terminal condition and `next` is a fresh
    /// start state.
    pub episode_end: bool,
}

/// A continuing environment driven by integer actions.
pub trait Environment {
    type State: Clone;

    fn num_actions(&self) -> usize;

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Self::State;

    fn transition(&self, x: &Self::State, u: usize, rng: &mut ChaCha8Rng) -> Result<Outcome<Self::State>>;
}

/// On-policy transition stream of fixed length.
pub struct Trajectory<'a, E: Environment, P> {
    env: &'a E,
    policy: P,
    rng: ChaCha8Rng,
    state: E::State,
    remaining: usize,
}

/// Streams `horizon` transitions of `env` under `policy`, seeded by `seed`.
///
/// `policy` maps the current state and the shared random stream to an
/// action.
pub fn sample_trajectory<E, P>(env: &E, policy: P, horizon: usize, seed: u64) -> Trajectory<'_, E, P>
where
    E: Environment,
    P: FnMut(&E::State, &mut ChaCha8Rng) -> usize,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = env.initial_state(&mut rng);
    Trajectory {
        env,
        policy,
        rng,
        state,
        remaining: horizon,
    }
}

impl<E, P> Iterator for Trajectory<'_, E, P>
where
    E: Environment,
    P: FnMut(&E::State, &mut ChaCha8Rng) -> usize,
{
    type Item = Result<TransitionSample<E::State>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let u = (self.policy)(&self.state, &mut self.rng);
        match self.env.transition(&self.state, u, &mut self.rng) {
            Ok(outcome) => {
                let x = std::mem::replace(&mut self.state, outcome.next.clone());
                Some(Ok(TransitionSample {
                    x,
                    u,
                    g: outcome.reward,
                    y: outcome.next,
                }))
            }
            Err(e) => {
                self.remaining = 0;
                Some(Err(e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{FeatureTable, SoftmaxPolicy};
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn single_state_stream_is_constant() {
        let mdp = crate::mdp::FiniteMdp::new(vec![DMatrix::identity(1, 1)], DVector::from_vec(vec![0.25])).unwrap();
        let env = GarnetInstance::from_mdp(mdp, RewardMode::State, 0.0);
        let policy = SoftmaxPolicy::new(vec![0.0], FeatureTable::zeros(1, 1, 1));
        let samples: Vec<_> = sample_trajectory(&env, |x, rng| policy.sample_action(x, rng), 50, 3)
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(samples.len(), 50);
        assert!(samples.iter().all(|s| s.x == 0 && s.y == 0 && s.u == 0 && s.g == 0.25));
    }

    #[test]
    fn fixed_seed_reproduces_stream() {
        let env = generate_garnet(&GarnetSpec::new(6, 2, 2, 0.1), 5);
        let policy = SoftmaxPolicy::new(vec![0.0], FeatureTable::zeros(6, 2, 1));
        let run = |seed| -> Vec<TransitionSample<usize>> {
            sample_trajectory(&env, |x, rng| policy.sample_action(x, rng), 200, seed)
                .collect::<Result<_>>()
                .unwrap()
        };
        assert_eq!(run(17), run(17));
        assert_ne!(run(17), run(18));
    }

    #[test]
    fn stream_is_chained() {
        let env = generate_garnet(&GarnetSpec::new(5, 3, 2, 0.1), 8);
        let policy = SoftmaxPolicy::new(vec![0.0], FeatureTable::zeros(5, 3, 1));
        let samples: Vec<_> = sample_trajectory(&env, |x, rng| policy.sample_action(x, rng), 100, 1)
            .collect::<Result<_>>()
            .unwrap();
        for w in samples.windows(2) {
            assert_eq!(w[0].y, w[1].x);
        }
    }
}

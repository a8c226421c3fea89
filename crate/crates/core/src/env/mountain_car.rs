use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, Outcome};
use crate::{Error, Result};

/// Throttle values indexed by action: reverse, coast, forward.
pub const CAR_ACTIONS: [i64; 3] = [-1, 0, 1];

/// Car dynamics constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MountainCarParams {
    pub force: f64,
    pub gravity: f64,
    pub position_bounds: (f64, f64),
    pub velocity_bounds: (f64, f64),
    pub goal: f64,
    /// Episodes longer than this are cut off and the car is reset.
    pub max_episode_steps: Option<u64>,
}

impl Default for MountainCarParams {
    fn default() -> Self {
        Self {
            force: 0.001,
            gravity: 0.0025,
            position_bounds: (-1.2, 0.6),
            velocity_bounds: (-0.07, 0.07),
            goal: 0.5,
            max_episode_steps: Some(10_000),
        }
    }
}

impl MountainCarParams {
    /// `[(p_min, p_max), (v_min, v_max)]`, the RBF basis domain.
    pub fn state_bounds(&self) -> [(f64, f64); 2] {
        [self.position_bounds, self.velocity_bounds]
    }
}

/// Position and velocity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MountainCarState {
    pub position: f64,
    pub velocity: f64,
}

impl MountainCarState {
    pub fn as_array(&self) -> [f64; 2] {
        [self.position, self.velocity]
    }
}

/// One deterministic step with throttle `action ∈ {−1, 0, 1}`.
///
/// Returns the next state, the reward (`−1`, or `0` when the goal is
/// reached) and whether the goal was reached.
pub fn mountain_car_step(
    params: &MountainCarParams,
    state: MountainCarState,
    action: i64,
) -> Result<(MountainCarState, f64, bool)> {
    if !(-1..=1).contains(&action) {
        return Err(Error::InvalidAction(action));
    }
    let (vmin, vmax) = params.velocity_bounds;
    let (pmin, pmax) = params.position_bounds;
    let mut velocity = (state.velocity + params.force * action as f64 - params.gravity * (3.0 * state.position).cos())
        .clamp(vmin, vmax);
    let mut position = state.position + velocity;
    if position <= pmin {
        position = pmin;
        velocity = 0.0;
    }
    position = position.min(pmax);
    let at_goal = position >= params.goal;
    let reward = if at_goal { 0.0 } else { -1.0 };
    Ok((MountainCarState { position, velocity }, reward, at_goal))
}

/// Continuing mountain car: reaching the goal (or the step cap) resets the
/// car to `p ~ U[p_min, goal)`, `v = 0`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MountainCar {
    pub params: MountainCarParams,
}

impl MountainCar {
    pub fn new(params: MountainCarParams) -> Self {
        Self { params }
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> MountainCarState {
        MountainCarState {
            position: rng.random_range(self.params.position_bounds.0..self.params.goal),
            velocity: 0.0,
        }
    }
}

impl Environment for MountainCar {
    type State = [f64; 2];

    fn num_actions(&self) -> usize {
        CAR_ACTIONS.len()
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        self.reset(rng).as_array()
    }

    fn transition(&self, x: &[f64; 2], u: usize, rng: &mut ChaCha8Rng) -> Result<Outcome<[f64; 2]>> {
        let action = *CAR_ACTIONS.get(u).ok_or(Error::InvalidAction(u as i64))?;
        let state = MountainCarState {
            position: x[0],
            velocity: x[1],
        };
        let (next, reward, at_goal) = mountain_car_step(&self.params, state, action)?;
        let next = if at_goal { self.reset(rng) } else { next };
        Ok(Outcome {
            reward,
            next: next.as_array(),
            episode_end: at_goal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn valley_bottom_is_equilibrium_when_coasting() {
        let p = MountainCarParams::default();
        let bottom = MountainCarState {
            position: -std::f64::consts::PI / 6.0,
            velocity: 0.0,
        };
        let (next, reward, done) = mountain_car_step(&p, bottom, 0).unwrap();
        assert!(next.velocity.abs() < 1e-15);
        assert!((next.position - bottom.position).abs() < 1e-15);
        assert_eq!(reward, -1.0);
        assert!(!done);
    }

    #[test]
    fn full_throttle_alone_cannot_climb() {
        let p = MountainCarParams::default();
        let mut s = MountainCarState {
            position: -std::f64::consts::PI / 6.0,
            velocity: 0.0,
        };
        for _ in 0..100 {
            let (next, _, done) = mountain_car_step(&p, s, 1).unwrap();
            assert!(!done);
            s = next;
        }
        assert!(s.position < 0.5);
    }

    #[test]
    fn bounds_and_left_wall() {
        let p = MountainCarParams::default();
        let s = MountainCarState {
            position: -1.19,
            velocity: -0.07,
        };
        let (next, _, _) = mountain_car_step(&p, s, -1).unwrap();
        assert_eq!(next.position, -1.2);
        assert_eq!(next.velocity, 0.0);
        let fast = MountainCarState {
            position: 0.0,
            velocity: 0.07,
        };
        let (next, _, _) = mountain_car_step(&p, fast, 1).unwrap();
        assert!(next.velocity <= 0.07);
    }

    #[test]
    fn goal_resets_and_rewards_zero() {
        let car = MountainCar::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = car.transition(&[0.49, 0.07], 2, &mut rng).unwrap();
        assert!(out.episode_end);
        assert_eq!(out.reward, 0.0);
        assert_eq!(out.next[1], 0.0);
        assert!((-1.2..0.5).contains(&out.next[0]));
    }

    #[test]
    fn rejects_bad_actions() {
        let p = MountainCarParams::default();
        let s = MountainCarState {
            position: 0.0,
            velocity: 0.0,
        };
        assert!(matches!(mountain_car_step(&p, s, 2), Err(Error::InvalidAction(2))));
        let car = MountainCar::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(car.transition(&[0.0, 0.0], 3, &mut rng).is_err());
    }
}

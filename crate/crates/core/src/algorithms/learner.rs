use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Algorithm, BankVariant, EstimatorBank, LearnerState, StepSchedule, TransitionSample};
use crate::basis::{AdaptiveBasis, ParamBox};
use crate::mdp::policy::{dot, sample_index, score_from_features, softmax_from_features};
use crate::mdp::ActorFeatures;
use crate::{Error, Result};

/// Box `H_P⁽θ⁾` applied to every actor coordinate.
pub const THETA_BOX: (f64, f64) = (-10.0, 10.0);

/// Estimator-only steps before ABPBE moves `r`, `s` and `θ`.
pub const DEFAULT_BURN_IN: u64 = 1000;

/// Deliberate defects used to confirm that the audits catch them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Negates the ABBE basis-parameter direction.
    FlipAbbeBasisDirection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerOptions {
    pub theta_box: (f64, f64),
    pub burn_in: u64,
    pub bank_variant: BankVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
}

impl Default for LearnerOptions {
    fn default() -> Self {
        Self {
            theta_box: THETA_BOX,
            burn_in: DEFAULT_BURN_IN,
            bank_variant: BankVariant::default(),
            fault: None,
        }
    }
}

/// Unscaled increments of one step: the update is
/// `η += α⁽³⁾ eta`, `r += α⁽³⁾ r`, `θ += α⁽²⁾ theta`, `s += α⁽¹⁾ s`,
/// followed by the box projections.
#[derive(Clone, Debug, PartialEq)]
pub struct Directions {
    pub td_error: f64,
    pub eta: f64,
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
    pub s: Vec<f64>,
}

/// Step functions of the actor-critic learners for a basis `B` and actor
/// features `F`.
#[derive(Clone, Debug)]
pub struct ActorCritic<B, F> {
    pub basis: B,
    pub actor: F,
    pub schedule: StepSchedule,
    pub options: LearnerOptions,
    s_box: ParamBox,
}

impl<B, F> ActorCritic<B, F>
where
    B: AdaptiveBasis,
    F: ActorFeatures<B::State>,
{
    pub fn new(basis: B, actor: F, schedule: StepSchedule, options: LearnerOptions) -> Self {
        let s_box = basis.param_box();
        Self {
            basis,
            actor,
            schedule,
            options,
            s_box,
        }
    }

    pub fn param_box(&self) -> &ParamBox {
        &self.s_box
    }

    /// Fresh state: zero `η`, `r`, `θ` and the basis default `s₀`.
    pub fn initial_state(&self) -> LearnerState {
        LearnerState::initial(
            self.basis.num_features(),
            self.actor.dim(),
            self.basis.default_params(),
        )
    }

    /// Action probabilities `μ_θ(·|x)`.
    pub fn action_probabilities(&self, theta: &[f64], x: &B::State) -> Vec<f64> {
        let mut xi = vec![0.0; self.actor.num_actions() * self.actor.dim()];
        self.actor.write_all(x, &mut xi);
        let mut probs = vec![0.0; self.actor.num_actions()];
        softmax_from_features(theta, &xi, &mut probs);
        probs
    }

    pub fn select_action<R: Rng + ?Sized>(&self, theta: &[f64], x: &B::State, rng: &mut R) -> usize {
        sample_index(&self.action_probabilities(theta, x), rng)
    }

    /// `d = g − η + φ(y, s)ᵀr − φ(x, s)ᵀr`, both features at the current `s`.
    pub fn td_error(&self, state: &LearnerState, sample: &TransitionSample<B::State>) -> Result<f64> {
        let phi = self.basis.features(&state.s, &sample.x)?;
        let phi_next = self.basis.features(&state.s, &sample.y)?;
        Ok(td(sample.g, state, &phi, &phi_next))
    }

    /// Every increment of `algorithm` at `state` for `sample`.
    ///
    /// ABPBE reads `bank`; the other learners ignore it.
    pub fn directions(
        &self,
        algorithm: Algorithm,
        state: &LearnerState,
        bank: Option<&EstimatorBank>,
        sample: &TransitionSample<B::State>,
    ) -> Result<Directions> {
        self.directions_masked(algorithm, state, bank, sample, true, true)
    }

    fn directions_masked(
        &self,
        algorithm: Algorithm,
        state: &LearnerState,
        bank: Option<&EstimatorBank>,
        sample: &TransitionSample<B::State>,
        need_theta: bool,
        need_s: bool,
    ) -> Result<Directions> {
        let k = self.basis.num_features();
        let ks = self.basis.num_params();
        let phi = self.basis.features(&state.s, &sample.x)?;
        let phi_next = self.basis.features(&state.s, &sample.y)?;
        let d = td(sample.g, state, &phi, &phi_next);

        let bank = match (algorithm, bank) {
            (Algorithm::Abpbe, Some(bank)) => Some(bank),
            (Algorithm::Abpbe, None) => {
                return Err(Error::ColdEstimatorBank {
                    updates: 0,
                    burn_in: self.options.burn_in,
                })
            }
            _ => None,
        };

        let r = match algorithm {
            Algorithm::Abtd | Algorithm::StaticAc => phi.iter().map(|p| d * p).collect(),
            Algorithm::Abbe => phi_next.iter().zip(&phi).map(|(pn, p)| -(d * (pn - p))).collect(),
            Algorithm::Abpbe => {
                let bank = bank.expect("checked above");
                (0..k)
                    .map(|i| -(d * dot(&phi, bank.w_r[i].as_slice()) + bank.w.dot(&bank.a.column(i))))
                    .collect()
            }
            Algorithm::Sarsa => return Err(unsupported(algorithm)),
        };

        let theta = if need_theta {
            let dim = self.actor.dim();
            let mut xi = vec![0.0; self.actor.num_actions() * dim];
            self.actor.write_all(&sample.x, &mut xi);
            let mut probs = vec![0.0; self.actor.num_actions()];
            softmax_from_features(&state.theta, &xi, &mut probs);
            let mut psi = vec![0.0; dim];
            score_from_features(&xi, &probs, sample.u, &mut psi);
            psi.iter_mut().for_each(|v| *v *= d);
            psi
        } else {
            vec![0.0; state.theta.len()]
        };

        let s = if !need_s {
            vec![0.0; ks]
        } else {
            match algorithm {
                Algorithm::StaticAc => vec![0.0; ks],
                Algorithm::Abtd => {
                    let mut grad = vec![0.0; ks];
                    self.basis.param_gradient_into(&state.s, &sample.x, &state.r, &mut grad)?;
                    grad.iter_mut().for_each(|g| *g *= d);
                    grad
                }
                Algorithm::Abbe => {
                    let mut grad = vec![0.0; ks];
                    let mut grad_next = vec![0.0; ks];
                    self.basis.param_gradient_into(&state.s, &sample.x, &state.r, &mut grad)?;
                    self.basis.param_gradient_into(&state.s, &sample.y, &state.r, &mut grad_next)?;
                    let sign = match self.options.fault {
                        Some(Fault::FlipAbbeBasisDirection) => 1.0,
                        None => -1.0,
                    };
                    grad_next
                        .iter()
                        .zip(&grad)
                        .map(|(gn, g)| sign * (d * (gn - g)))
                        .collect()
                }
                Algorithm::Abpbe => {
                    let bank = bank.expect("checked above");
                    let r_vec = nalgebra::DVector::from_column_slice(&state.r);
                    (0..ks)
                        .map(|i| {
                            let e_s = &bank.a_s[i] * &r_vec + &bank.b_s[i];
                            -(d * dot(&phi, bank.w_s[i].as_slice()) + e_s.dot(&bank.w))
                        })
                        .collect()
                }
                Algorithm::Sarsa => unreachable!(),
            }
        };

        Ok(Directions {
            td_error: d,
            eta: sample.g - state.eta,
            r,
            theta,
            s,
        })
    }

    fn apply(&self, state: &LearnerState, dirs: &Directions) -> Result<LearnerState> {
        let [a1, a2, a3, _] = self.schedule.steps(state.step_count);
        let mut next = state.clone();
        next.eta = state.eta + a3 * dirs.eta;
        for (r, dr) in next.r.iter_mut().zip(&dirs.r) {
            *r += a3 * dr;
        }
        if a2 != 0.0 {
            let (lo, hi) = self.options.theta_box;
            for (t, dt) in next.theta.iter_mut().zip(&dirs.theta) {
                *t = (*t + a2 * dt).clamp(lo, hi);
            }
        }
        if a1 != 0.0 {
            for (s, ds) in next.s.iter_mut().zip(&dirs.s) {
                *s += a1 * ds;
            }
            self.s_box.project(&mut next.s);
        }
        next.step_count += 1;
        if let Some(component) = next.first_non_finite() {
            return Err(Error::NonFiniteUpdate {
                component: component.to_string(),
                step: state.step_count,
            });
        }
        Ok(next)
    }

    fn step_with(
        &self,
        algorithm: Algorithm,
        state: &LearnerState,
        bank: Option<&EstimatorBank>,
        sample: &TransitionSample<B::State>,
    ) -> Result<LearnerState> {
        let [a1, a2, _, _] = self.schedule.steps(state.step_count);
        let dirs = self.directions_masked(algorithm, state, bank, sample, a2 != 0.0, a1 != 0.0)?;
        self.apply(state, &dirs)
    }

    /// Adaptive basis TD: `r ← r + α⁽³⁾ d φ`,
    /// `s ← H_s[s + α⁽¹⁾ d (∂φᵀ/∂s) r]`.
    pub fn abtd_step(&self, state: &LearnerState, sample: &TransitionSample<B::State>) -> Result<LearnerState> {
        self.step_with(Algorithm::Abtd, state, None, sample)
    }

    /// Adaptive basis for the Bellman error: `r ← r − α⁽³⁾ d (φ′ − φ)`,
    /// `s ← H_s[s − α⁽¹⁾ d (∂φ′/∂s − ∂φ/∂s)ᵀ r]`.
    pub fn abbe_step(&self, state: &LearnerState, sample: &TransitionSample<B::State>) -> Result<LearnerState> {
        self.step_with(Algorithm::Abbe, state, None, sample)
    }

    /// Fixed-basis actor-critic; `s` never moves.
    pub fn static_ac_step(&self, state: &LearnerState, sample: &TransitionSample<B::State>) -> Result<LearnerState> {
        self.step_with(Algorithm::StaticAc, state, None, sample)
    }

    /// Adaptive basis for the projected Bellman error; requires a warm
    /// estimator bank.
    pub fn abpbe_step(
        &self,
        state: &LearnerState,
        bank: &EstimatorBank,
        sample: &TransitionSample<B::State>,
    ) -> Result<LearnerState> {
        if bank.updates < self.options.burn_in {
            return Err(Error::ColdEstimatorBank {
                updates: bank.updates,
                burn_in: self.options.burn_in,
            });
        }
        self.step_with(Algorithm::Abpbe, state, Some(bank), sample)
    }

    /// Average-reward update alone, used while the estimator bank warms up.
    pub fn eta_only_step(&self, state: &LearnerState, sample: &TransitionSample<B::State>) -> Result<LearnerState> {
        let a3 = self.schedule.critic.at(state.step_count);
        let mut next = state.clone();
        next.eta = state.eta + a3 * (sample.g - state.eta);
        next.step_count += 1;
        if !next.eta.is_finite() {
            return Err(Error::NonFiniteUpdate {
                component: "eta".into(),
                step: state.step_count,
            });
        }
        Ok(next)
    }

    /// Advances the six ABPBE estimator families on `α⁽⁴⁾`.
    pub fn abpbe_estimator_step(
        &self,
        bank: &EstimatorBank,
        state: &LearnerState,
        sample: &TransitionSample<B::State>,
    ) -> Result<EstimatorBank> {
        let alpha = self.schedule.estimator.at(state.step_count);
        let k = self.basis.num_features();
        let ks = self.basis.num_params();
        let phi = nalgebra::DVector::from_vec(self.basis.features(&state.s, &sample.x)?);
        let phi_next = nalgebra::DVector::from_vec(self.basis.features(&state.s, &sample.y)?);
        let jac = self.basis.jacobian(&state.s, &sample.x)?;
        let jac_next = self.basis.jacobian(&state.s, &sample.y)?;
        let d = td(sample.g, state, phi.as_slice(), phi_next.as_slice());
        let printed = self.options.bank_variant == BankVariant::Printed;
        let delta = if printed { &phi - &phi_next } else { &phi_next - &phi };
        let reward_term = if printed { sample.g } else { sample.g - state.eta };
        let r = nalgebra::DVector::from_column_slice(&state.r);

        let mut next = bank.clone();
        next.a = &bank.a + alpha * (&phi * delta.transpose() - &bank.a);

        let phi_w = phi.dot(&bank.w);
        next.w = &bank.w + alpha * (&phi * d - &phi * phi_w);

        for i in 0..k {
            let target = bank.a.column(i) - &phi * phi.dot(&bank.w_r[i]);
            next.w_r[i] = &bank.w_r[i] + alpha * target;
        }

        for i in 0..ks {
            let phi_s = jac.column(i).into_owned();
            let phi_s_next = jac_next.column(i).into_owned();
            let delta_s = if printed {
                &phi_s - &phi_s_next
            } else {
                &phi_s_next - &phi_s
            };
            let a_s_target: DMatrix<f64> = &phi_s * delta.transpose() + &phi * delta_s.transpose();
            next.a_s[i] = &bank.a_s[i] + alpha * (a_s_target - &bank.a_s[i]);
            next.b_s[i] = &bank.b_s[i] + alpha * (&phi_s * reward_term - &bank.b_s[i]);
            // ∂(φφᵀ)/∂s_i w = φ_s (φᵀw) + φ (φ_sᵀw).
            let gram_deriv_w = &phi_s * phi_w + &phi * phi_s.dot(&bank.w);
            let w_s_target = &bank.a_s[i] * &r + &bank.b_s[i] - gram_deriv_w - &phi * phi.dot(&bank.w_s[i]);
            next.w_s[i] = &bank.w_s[i] + alpha * w_s_target;
        }
        next.updates += 1;
        if let Some(component) = next.first_non_finite() {
            return Err(Error::NonFiniteUpdate {
                component: format!("bank.{component}"),
                step: state.step_count,
            });
        }
        Ok(next)
    }
}

fn td(g: f64, state: &LearnerState, phi: &[f64], phi_next: &[f64]) -> f64 {
    g - state.eta + dot(phi_next, &state.r) - dot(phi, &state.r)
}

fn unsupported(algorithm: Algorithm) -> Error {
    Error::Config(format!("{} is not an actor-critic learner", algorithm.name()))
}

/// A running actor-critic learner: the step functions plus the current
/// iterate and, for ABPBE, the estimator bank.
#[derive(Clone, Debug)]
pub struct Learner<B, F> {
    pub ac: ActorCritic<B, F>,
    pub algorithm: Algorithm,
    pub state: LearnerState,
    pub bank: Option<EstimatorBank>,
}

impl<B, F> Learner<B, F>
where
    B: AdaptiveBasis,
    F: ActorFeatures<B::State>,
{
    pub fn new(ac: ActorCritic<B, F>, algorithm: Algorithm) -> Result<Self> {
        if algorithm == Algorithm::Sarsa {
            return Err(unsupported(algorithm));
        }
        let state = ac.initial_state();
        let bank = (algorithm == Algorithm::Abpbe)
            .then(|| EstimatorBank::zeros(ac.basis.num_features(), ac.basis.num_params()));
        Ok(Self {
            ac,
            algorithm,
            state,
            bank,
        })
    }

    pub fn select_action<R: Rng + ?Sized>(&self, x: &B::State, rng: &mut R) -> usize {
        self.ac.select_action(&self.state.theta, x, rng)
    }

    pub fn step(&mut self, sample: &TransitionSample<B::State>) -> Result<()> {
        let next = match self.algorithm {
            Algorithm::Abtd => self.ac.abtd_step(&self.state, sample)?,
            Algorithm::Abbe => self.ac.abbe_step(&self.state, sample)?,
            Algorithm::StaticAc => self.ac.static_ac_step(&self.state, sample)?,
            Algorithm::Abpbe => {
                let bank = self.bank.as_ref().expect("ABPBE learner carries a bank");
                let next_bank = self.ac.abpbe_estimator_step(bank, &self.state, sample)?;
                let next = if bank.updates >= self.ac.options.burn_in {
                    self.ac.abpbe_step(&self.state, bank, sample)?
                } else {
                    self.ac.eta_only_step(&self.state, sample)?
                };
                self.bank = Some(next_bank);
                next
            }
            Algorithm::Sarsa => return Err(unsupported(self.algorithm)),
        };
        self.state = next;
        Ok(())
    }
}

//! Brute-force and finite-difference cross-checks.
//!
//! Every expected update direction is assembled by exhaustive summation
//! over `(x, u, y)` weighted by `D(x) μ(u|x) P_u(x, y)` and compared with
//! central finite differences of the exact objectives from [`crate::mdp`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    validate_schedule, ActorCritic, Algorithm, Directions, EstimatorBank, Fault, LearnerOptions, LearnerState,
    ScheduleReport, StepSchedule, TransitionSample,
};
use crate::basis::{feature_matrix, feature_matrix_derivatives, AdaptiveBasis, CosineBasis, FiniteBasis, RbfBasis};
use crate::env::{derive_seed, GarnetSpec, MountainCarParams};
use crate::mdp::{
    exact_objectives, exact_policy_gradient, induced_chain, ActorFeatures, CriticMoments, FeatureTable, FiniteMdp,
    InducedChain, Objectives, SoftmaxPolicy,
};
use crate::{Error, Result};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Step for basis Jacobian audits.
pub const JACOBIAN_FD_STEP: f64 = 1e-6;
/// Norm below which gradient errors are measured absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub const POLICY_GRADIENT_TOL: f64 = 1e-4;
pub const ABBE_TOL: f64 = 1e-4;
pub const ABPBE_TOL: f64 = 1e-2;
pub const JACOBIAN_TOL: f64 = 1e-6;
pub const FIXED_POINT_TOL: f64 = 1e-10;
/// Condition number above which `A` is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Central-difference gradient of `f` at `x`.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    try_finite_difference(|p| Ok(f(p)), x, h).expect("infallible")
}

/// [`finite_difference`] for fallible objectives.
pub fn try_finite_difference<F: FnMut(&[f64]) -> Result<f64>>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut p = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let up = f(&p)?;
        p[i] = x[i] - h;
        let down = f(&p)?;
        p[i] = x[i];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Fourth-order central-difference gradient:
/// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h` per coordinate.
pub fn try_five_point_difference<F: FnMut(&[f64]) -> Result<f64>>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut p = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut at = |offset: f64| -> Result<f64> {
            p[i] = x[i] + offset;
            f(&p)
        };
        let value = (-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h);
        p[i] = x[i];
        grad.push(value);
    }
    Ok(grad)
}

/// `‖a − b‖₂ / max(‖b‖₂, RELATIVE_FLOOR)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(RELATIVE_FLOOR)
}

/// One analytic-versus-reference comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientCheck {
    pub name: String,
    pub analytic: Vec<f64>,
    pub reference: Vec<f64>,
    pub relative_error: f64,
    /// `None` for report-only comparisons.
    pub tolerance: Option<f64>,
    pub passed: bool,
}

impl GradientCheck {
    pub fn new(name: impl Into<String>, analytic: Vec<f64>, reference: Vec<f64>, tolerance: Option<f64>) -> Self {
        let relative_error = relative_error(&analytic, &reference);
        let passed = tolerance.is_none_or(|t| relative_error <= t);
        Self {
            name: name.into(),
            analytic,
            reference,
            relative_error,
            tolerance,
            passed,
        }
    }
}

/// Chain induced by the learner's actor at `theta`.
pub fn chain_at<B, F>(ac: &ActorCritic<B, F>, mdp: &FiniteMdp, theta: &[f64]) -> Result<InducedChain>
where
    B: FiniteBasis,
    F: ActorFeatures<usize>,
{
    let n = mdp.num_states();
    let mut probs = DMatrix::zeros(n, mdp.num_actions());
    for x in 0..n {
        for (u, p) in ac.action_probabilities(theta, &x).into_iter().enumerate() {
            probs[(x, u)] = p;
        }
    }
    InducedChain::from_action_probs(mdp, probs)
}

/// Exact objectives at critic weights `r` and basis parameters `s`.
pub fn objectives_at<B: FiniteBasis + ?Sized>(
    mdp: &FiniteMdp,
    chain: &InducedChain,
    basis: &B,
    r: &[f64],
    s: &[f64],
) -> Result<Objectives> {
    let (phi, _) = feature_matrix(basis, s)?;
    exact_objectives(mdp, chain, &phi, &DVector::from_column_slice(r))
}

/// Exact fixed points of the ABPBE estimator recursions (gradient form)
/// at `(r, s, η)`. The returned bank reports `u64::MAX` updates.
pub fn exact_estimator_bank<B: FiniteBasis + ?Sized>(
    mdp: &FiniteMdp,
    chain: &InducedChain,
    basis: &B,
    r: &[f64],
    s: &[f64],
    eta: f64,
) -> Result<EstimatorBank> {
    let (phi, _) = feature_matrix(basis, s)?;
    let dphi = feature_matrix_derivatives(basis, s)?;
    let dmat = DMatrix::from_diagonal(&chain.stationary);
    let p = &chain.transition;
    let residual_reward = mdp.rewards().add_scalar(-eta);
    let phi_t_d = phi.transpose() * &dmat;
    let c = &phi_t_d * &phi;
    let c_inv = c.clone().try_inverse().ok_or(Error::RankDeficientBasis {
        singular_values: c.singular_values().iter().copied().collect(),
    })?;
    let a = &phi_t_d * (p * &phi - &phi);
    let b = &phi_t_d * &residual_reward;
    let r = DVector::from_column_slice(r);
    let e = &a * &r + &b;
    let w = &c_inv * &e;
    let w_r = (0..phi.ncols()).map(|i| &c_inv * a.column(i)).collect();
    let mut a_s = Vec::with_capacity(dphi.len());
    let mut b_s = Vec::with_capacity(dphi.len());
    let mut w_s = Vec::with_capacity(dphi.len());
    for ds in &dphi {
        let ds_t_d = ds.transpose() * &dmat;
        let a_i = &ds_t_d * (p * &phi - &phi) + &phi_t_d * (p * ds - ds);
        let b_i = &ds_t_d * &residual_reward;
        let dc = &ds_t_d * &phi + &phi_t_d * ds;
        w_s.push(&c_inv * (&a_i * &r + &b_i - dc * &w));
        a_s.push(a_i);
        b_s.push(b_i);
    }
    Ok(EstimatorBank {
        a,
        a_s,
        b_s,
        w,
        w_r,
        w_s,
        updates: u64::MAX,
    })
}

/// Expected increments of `algorithm` at `state`, summed over every
/// transition with weight `D(x) μ(u|x) P_u(x, y)` and reward `g(x)`.
/// `chain` must be the chain induced at `state.theta`.
pub fn expected_directions<B, F>(
    ac: &ActorCritic<B, F>,
    mdp: &FiniteMdp,
    chain: &InducedChain,
    algorithm: Algorithm,
    state: &LearnerState,
    bank: Option<&EstimatorBank>,
) -> Result<Directions>
where
    B: FiniteBasis,
    F: ActorFeatures<usize>,
{
    let mut total = Directions {
        td_error: 0.0,
        eta: 0.0,
        r: vec![0.0; state.r.len()],
        theta: vec![0.0; state.theta.len()],
        s: vec![0.0; state.s.len()],
    };
    let n = mdp.num_states();
    for x in 0..n {
        let dx = chain.stationary[x];
        if dx == 0.0 {
            continue;
        }
        for u in 0..mdp.num_actions() {
            let mu = chain.action_probs[(x, u)];
            if mu == 0.0 {
                continue;
            }
            let p = mdp.transition(u);
            for y in 0..n {
                let weight = dx * mu * p[(x, y)];
                if weight == 0.0 {
                    continue;
                }
                let sample = TransitionSample {
                    x,
                    u,
                    g: mdp.rewards()[x],
                    y,
                };
                let dirs = ac.directions(algorithm, state, bank, &sample)?;
                total.td_error += weight * dirs.td_error;
                total.eta += weight * dirs.eta;
                for (t, v) in total.r.iter_mut().zip(&dirs.r) {
                    *t += weight * v;
                }
                for (t, v) in total.theta.iter_mut().zip(&dirs.theta) {
                    *t += weight * v;
                }
                for (t, v) in total.s.iter_mut().zip(&dirs.s) {
                    *t += weight * v;
                }
            }
        }
    }
    Ok(total)
}

/// `∇_s MSBE` assembled from the feature Jacobians:
/// `Σ_x D(x) (TΦr − Φr)(x) ((P − I) ∂Φ/∂s_i r)(x)`.
pub fn msbe_gradient_s<B: FiniteBasis + ?Sized>(
    mdp: &FiniteMdp,
    chain: &InducedChain,
    basis: &B,
    r: &[f64],
    s: &[f64],
) -> Result<Vec<f64>> {
    let (phi, _) = feature_matrix(basis, s)?;
    let r = DVector::from_column_slice(r);
    let v = &phi * &r;
    let residual = mdp.rewards().add_scalar(-chain.average_reward) + &chain.transition * &v - &v;
    feature_matrix_derivatives(basis, s)?
        .iter()
        .map(|ds| {
            let dv = ds * &r;
            let dres = &chain.transition * &dv - dv;
            Ok(residual
                .iter()
                .zip(dres.iter())
                .zip(chain.stationary.iter())
                .map(|((a, b), d)| d * a * b)
                .sum())
        })
        .collect()
}

/// Compares `∇_θη` from the exact policy-gradient formula with central
/// differences of `η(θ)`.
pub fn policy_gradient_check<F: ActorFeatures<usize>>(mdp: &FiniteMdp, features: &F, theta: &[f64]) -> Result<GradientCheck> {
    let policy = SoftmaxPolicy::new(theta.to_vec(), features);
    let chain = induced_chain(mdp, &policy)?;
    let analytic = exact_policy_gradient(mdp, &policy, &chain);
    let numeric = try_finite_difference(
        |t| Ok(induced_chain(mdp, &SoftmaxPolicy::new(t.to_vec(), features))?.average_reward),
        theta,
        FD_STEP,
    )?;
    Ok(GradientCheck::new("policy gradient vs fd eta", analytic, numeric, Some(POLICY_GRADIENT_TOL)))
}

/// Expected-direction audit at one `(θ, r, s)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientAudit {
    pub checks: Vec<GradientCheck>,
    pub objectives: Objectives,
    /// `|mspbe − mspbe_w_form|`.
    pub mspbe_identity_gap: f64,
    pub passed: bool,
}

impl GradientAudit {
    pub fn check(&self, name: &str) -> Option<&GradientCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Compares the exact expected update directions with finite-difference
/// gradients of the exact objectives, at `state` with `η` replaced by the
/// exact average reward:
///
/// * ABBE `(r, s)` against `−∇ ½E[d²]` (asserted) and `s` against
///   `−∇_s MSBE` (reported),
/// * ABPBE `(r, s)` with the bank at its exact values against `−∇ MSPBE`
///   (asserted),
/// * ABTD `s` against `−∇_s MSE` (reported),
/// * the exact policy gradient against `∇_θη` (asserted).
pub fn audit_gradients<B, F>(ac: &ActorCritic<B, F>, mdp: &FiniteMdp, state: &LearnerState) -> Result<GradientAudit>
where
    B: FiniteBasis,
    F: ActorFeatures<usize>,
{
    let chain = chain_at(ac, mdp, &state.theta)?;
    let mut state = state.clone();
    state.eta = chain.average_reward;
    let basis = &ac.basis;
    let (r, s) = (&state.r, &state.s);
    let objective = |r: &[f64], s: &[f64]| objectives_at(mdp, &chain, basis, r, s);
    let fd_r = |pick: fn(&Objectives) -> f64| try_finite_difference(|r| Ok(pick(&objective(r, s)?)), r, FD_STEP);
    let fd_s = |pick: fn(&Objectives) -> f64| try_finite_difference(|s| Ok(pick(&objective(r, s)?)), s, FD_STEP);
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();

    let mut checks = Vec::new();
    let abbe = expected_directions(ac, mdp, &chain, Algorithm::Abbe, &state, None)?;
    checks.push(GradientCheck::new("abbe r vs fd mstde", neg(&abbe.r), fd_r(|o| o.mstde)?, Some(ABBE_TOL)));
    checks.push(GradientCheck::new("abbe s vs fd mstde", neg(&abbe.s), fd_s(|o| o.mstde)?, Some(ABBE_TOL)));
    checks.push(GradientCheck::new("abbe s vs fd msbe", neg(&abbe.s), fd_s(|o| o.msbe)?, None));

    let bank = exact_estimator_bank(mdp, &chain, basis, r, s, state.eta)?;
    let abpbe = expected_directions(ac, mdp, &chain, Algorithm::Abpbe, &state, Some(&bank))?;
    checks.push(GradientCheck::new("abpbe r vs fd mspbe", neg(&abpbe.r), fd_r(|o| o.mspbe)?, Some(ABPBE_TOL)));
    checks.push(GradientCheck::new("abpbe s vs fd mspbe", neg(&abpbe.s), fd_s(|o| o.mspbe)?, Some(ABPBE_TOL)));

    let abtd = expected_directions(ac, mdp, &chain, Algorithm::Abtd, &state, None)?;
    checks.push(GradientCheck::new("abtd s vs fd mse", neg(&abtd.s), fd_s(|o| o.mse)?, None));

    checks.push(policy_gradient_check(mdp, &ac.actor, &state.theta)?);

    let objectives = objective(r, s)?;
    let passed = checks.iter().all(|c| c.passed);
    Ok(GradientAudit {
        checks,
        mspbe_identity_gap: (objectives.mspbe - objectives.mspbe_w_form).abs(),
        objectives,
        passed,
    })
}

/// TD fixed point `r* = −A⁻¹b` for the basis matrix `phi`.
pub fn td_fixed_point(mdp: &FiniteMdp, chain: &InducedChain, phi: &DMatrix<f64>) -> Result<DVector<f64>> {
    let moments = CriticMoments::new(mdp, chain, phi)?;
    let sv = moments.a.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if !(min > 0.0) || max / min > MAX_CONDITION {
        return Err(Error::SingularA);
    }
    moments.a.clone().lu().solve(&(-&moments.b)).ok_or(Error::SingularA)
}

/// `E[d φ(x)]` by direct summation over `(x, u, y)`.
pub fn mean_td_feature_by_summation(
    mdp: &FiniteMdp,
    chain: &InducedChain,
    phi: &DMatrix<f64>,
    r: &DVector<f64>,
) -> DVector<f64> {
    let n = mdp.num_states();
    let v = phi * r;
    let mut total = DVector::zeros(phi.ncols());
    for x in 0..n {
        for u in 0..mdp.num_actions() {
            let p = mdp.transition(u);
            for y in 0..n {
                let w = chain.stationary[x] * chain.action_probs[(x, u)] * p[(x, y)];
                if w != 0.0 {
                    let d = mdp.rewards()[x] - chain.average_reward + v[y] - v[x];
                    total += phi.row(x).transpose() * (w * d);
                }
            }
        }
    }
    total
}

/// Analytic versus finite-difference Jacobians over a set of points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JacobianAudit {
    pub family: String,
    pub points: usize,
    /// Largest `|analytic − fd| / max(1, |fd|)` over all entries.
    pub max_error: f64,
    pub worst_point: usize,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn audit_jacobian<B>(family: &str, basis: &B, points: &[(Vec<f64>, B::State)]) -> Result<JacobianAudit>
where
    B: AdaptiveBasis,
    B::State: Sync,
{
    let errors: Vec<f64> = points
        .par_iter()
        .map(|(s, x)| {
            let jac = basis.jacobian(s, x)?;
            let mut worst: f64 = 0.0;
            for d in 0..basis.num_features() {
                let fd = try_five_point_difference(|p| Ok(basis.features(p, x)?[d]), s, JACOBIAN_FD_STEP)?;
                for (i, v) in fd.iter().enumerate() {
                    worst = worst.max((jac[(d, i)] - v).abs() / v.abs().max(1.0));
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let (worst_point, max_error) = errors
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(JacobianAudit {
        family: family.to_string(),
        points: points.len(),
        max_error,
        worst_point,
        tolerance: JACOBIAN_TOL,
        passed: max_error <= JACOBIAN_TOL,
    })
}

/// Random `(s, x)` audit points for a finite basis, `s` uniform in its box.
pub fn random_finite_points<B: FiniteBasis + ?Sized, R: Rng + ?Sized>(
    basis: &B,
    count: usize,
    rng: &mut R,
) -> Vec<(Vec<f64>, usize)> {
    let bx = basis.param_box();
    (0..count)
        .map(|_| {
            let s = bx.lower.iter().zip(&bx.upper).map(|(&lo, &hi)| rng.random_range(lo..=hi)).collect();
            (s, rng.random_range(0..basis.num_states()))
        })
        .collect()
}

/// Random `(s, x)` audit points for an RBF basis, `s` uniform in its box and
/// `x` uniform over the state bounds.
pub fn random_rbf_points<R: Rng + ?Sized>(basis: &RbfBasis, count: usize, rng: &mut R) -> Vec<(Vec<f64>, [f64; 2])> {
    let bx = basis.param_box();
    let [(p0, p1), (v0, v1)] = basis.bounds();
    (0..count)
        .map(|_| {
            let s = bx.lower.iter().zip(&bx.upper).map(|(&lo, &hi)| rng.random_range(lo..=hi)).collect();
            (s, [rng.random_range(p0..=p1), rng.random_range(v0..=v1)])
        })
        .collect()
}

/// Basis whose Jacobian comes from a different instance than its features;
/// used to confirm that the Jacobian audit detects inconsistent tables.
#[derive(Clone, Debug)]
pub struct MismatchedJacobian<B> {
    pub features: B,
    pub jacobian: B,
}

impl<B: AdaptiveBasis> AdaptiveBasis for MismatchedJacobian<B> {
    type State = B::State;

    fn num_features(&self) -> usize {
        self.features.num_features()
    }

    fn num_params(&self) -> usize {
        self.features.num_params()
    }

    fn default_params(&self) -> Vec<f64> {
        self.features.default_params()
    }

    fn param_box(&self) -> crate::basis::ParamBox {
        self.features.param_box()
    }

    fn features_into(&self, s: &[f64], x: &Self::State, out: &mut [f64]) -> Result<()> {
        self.features.features_into(s, x, out)
    }

    fn jacobian_into(&self, s: &[f64], x: &Self::State, out: &mut DMatrix<f64>) -> Result<()> {
        self.jacobian.jacobian_into(s, x, out)
    }

    fn param_gradient_into(&self, s: &[f64], x: &Self::State, r: &[f64], out: &mut [f64]) -> Result<()> {
        self.jacobian.param_gradient_into(s, x, r, out)
    }
}

/// Empirical constants of the boundedness and smoothness assumptions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionBounds {
    /// `max ‖ψ(x, u)‖`.
    pub b_psi: f64,
    /// `max ‖∇_θψ(x, u)‖_F`.
    pub b_psi_grad: f64,
    /// `max |φ_d(x, s)|`.
    pub b_phi: f64,
    /// Largest `‖φ(x, s₁) − φ(x, s₂)‖ / ‖s₁ − s₂‖` with `‖s₁ − s₂‖ ≤ 0.1`.
    pub l_phi: f64,
    /// `max |g(x)|`.
    pub b_g: f64,
    /// `max |η(θ)|`.
    pub b_eta: f64,
}

impl AssumptionBounds {
    pub fn all_finite(&self) -> bool {
        [self.b_psi, self.b_psi_grad, self.b_phi, self.l_phi, self.b_g, self.b_eta]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Measures [`AssumptionBounds`] over `draws` random `(θ, s, x)` with `θ`
/// uniform in `theta_box` and `s` uniform in the basis box.
pub fn assumption_bounds<B, F, R>(
    mdp: &FiniteMdp,
    basis: &B,
    actor: &F,
    theta_box: (f64, f64),
    draws: usize,
    rng: &mut R,
) -> Result<AssumptionBounds>
where
    B: FiniteBasis,
    F: ActorFeatures<usize>,
    R: Rng + ?Sized,
{
    let n = mdp.num_states();
    let dim = actor.dim();
    let actions = actor.num_actions();
    let bx = basis.param_box();
    let mut out = AssumptionBounds {
        b_psi: 0.0,
        b_psi_grad: 0.0,
        b_phi: 0.0,
        l_phi: 0.0,
        b_g: mdp.rewards().amax(),
        b_eta: 0.0,
    };
    let mut xi = vec![0.0; actions * dim];
    for _ in 0..draws {
        let theta: Vec<f64> = (0..dim).map(|_| rng.random_range(theta_box.0..=theta_box.1)).collect();
        let policy = SoftmaxPolicy::new(theta, actor);
        out.b_eta = out.b_eta.max(induced_chain(mdp, &policy)?.average_reward.abs());
        let x = rng.random_range(0..n);
        let probs = policy.probabilities(&x);
        actor.write_all(&x, &mut xi);
        let mean: Vec<f64> = (0..dim)
            .map(|j| (0..actions).map(|u| probs[u] * xi[u * dim + j]).sum())
            .collect();
        for u in 0..actions {
            let psi: f64 = (0..dim).map(|j| (xi[u * dim + j] - mean[j]).powi(2)).sum::<f64>().sqrt();
            out.b_psi = out.b_psi.max(psi);
        }
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for u in 0..actions {
            let c = DVector::from_fn(dim, |j, _| xi[u * dim + j] - mean[j]);
            cov += probs[u] * &c * c.transpose();
        }
        out.b_psi_grad = out.b_psi_grad.max(cov.norm());

        let s1: Vec<f64> = bx.lower.iter().zip(&bx.upper).map(|(&lo, &hi)| rng.random_range(lo..=hi)).collect();
        let mut s2: Vec<f64> = s1
            .iter()
            .map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal) / (s1.len() as f64).sqrt())
            .collect();
        bx.project(&mut s2);
        let ds: f64 = s1.iter().zip(&s2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let f1 = basis.features(&s1, &x)?;
        let f2 = basis.features(&s2, &x)?;
        out.b_phi = out.b_phi.max(f1.iter().chain(&f2).fold(0.0, |m: f64, v| m.max(v.abs())));
        if ds > 0.0 && ds <= 0.1 {
            let df: f64 = f1.iter().zip(&f2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            out.l_phi = out.l_phi.max(df / ds);
        }
    }
    Ok(out)
}

/// Settings of the full audit suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationOptions {
    pub seed: u64,
    /// Random instances per gradient audit family.
    pub instances: usize,
    pub jacobian_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
    /// Audit a cosine basis whose Jacobian uses a different phase table.
    pub wrong_phase: bool,
    pub schedule: StepSchedule,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 5,
            jacobian_points: 100,
            fault: None,
            wrong_phase: false,
            schedule: StepSchedule::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPointCheck {
    pub seed: u64,
    /// `‖E[dφ]‖∞` at `r*`, by direct summation.
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceAudit {
    pub garnet: GarnetSpec,
    pub seed: u64,
    pub num_features: usize,
    pub audit: GradientAudit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub options: ValidationOptions,
    pub gradient_audits: Vec<InstanceAudit>,
    pub fixed_points: Vec<FixedPointCheck>,
    pub jacobians: Vec<JacobianAudit>,
    pub bounds: Vec<AssumptionBounds>,
    pub schedule: ScheduleReport,
    pub passed: bool,
}

impl ValidationReport {
    /// Names of the failed hard checks.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for a in &self.gradient_audits {
            for c in a.audit.checks.iter().filter(|c| !c.passed) {
                out.push(format!(
                    "{} on garnet({},{},{},{}) seed {}: relative error {:.3e}",
                    c.name, a.garnet.states, a.garnet.actions, a.garnet.branching, a.garnet.sigma, a.seed, c.relative_error
                ));
            }
        }
        for f in self.fixed_points.iter().filter(|f| !f.passed) {
            out.push(format!("td fixed point seed {}: residual {:.3e}", f.seed, f.residual));
        }
        for j in self.jacobians.iter().filter(|j| !j.passed) {
            out.push(format!("{} jacobian: max error {:.3e}", j.family, j.max_error));
        }
        if self.bounds.iter().any(|b| !b.all_finite()) {
            out.push("assumption bounds not finite".into());
        }
        if !self.schedule.passed {
            out.push("step schedule".into());
        }
        out
    }
}

type GarnetSetting = ActorCritic<CosineBasis, FeatureTable>;

/// Builds an ergodic Garnet instance, a random-phase cosine critic basis
/// and the block one-hot actor on top of it.
pub fn garnet_setting(
    spec: &GarnetSpec,
    num_features: usize,
    seed: u64,
    options: LearnerOptions,
) -> Result<(FiniteMdp, GarnetSetting)> {
    let (garnet, ac) = crate::experiment::garnet_problem(spec, num_features, seed, StepSchedule::default(), options)?;
    Ok((garnet.mdp, ac))
}

fn random_audit_state<R: Rng + ?Sized>(ac: &GarnetSetting, rng: &mut R) -> LearnerState {
    let mut state = ac.initial_state();
    state.theta.iter_mut().for_each(|t| *t = rng.sample::<f64, _>(StandardNormal));
    state.r.iter_mut().for_each(|r| *r = rng.sample::<f64, _>(StandardNormal));
    state.s = vec![rng.random_range(0.2..3.0)];
    state
}

fn audit_instance(spec: GarnetSpec, num_features: usize, seed: u64, fault: Option<Fault>) -> Result<InstanceAudit> {
    let options = LearnerOptions {
        fault,
        ..LearnerOptions::default()
    };
    let (mdp, ac) = garnet_setting(&spec, num_features, seed, options)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let state = random_audit_state(&ac, &mut rng);
    Ok(InstanceAudit {
        garnet: spec,
        seed,
        num_features,
        audit: audit_gradients(&ac, &mdp, &state)?,
    })
}

fn fixed_point_instance(seed: u64) -> Result<FixedPointCheck> {
    let spec = GarnetSpec::new(10, 3, 2, 0.1);
    let (mdp, ac) = garnet_setting(&spec, 3, seed, LearnerOptions::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let state = random_audit_state(&ac, &mut rng);
    let chain = chain_at(&ac, &mdp, &state.theta)?;
    let (phi, _) = feature_matrix(&ac.basis, &state.s)?;
    let r_star = td_fixed_point(&mdp, &chain, &phi)?;
    let residual = mean_td_feature_by_summation(&mdp, &chain, &phi, &r_star).amax();
    Ok(FixedPointCheck {
        seed,
        residual,
        tolerance: FIXED_POINT_TOL,
        passed: residual <= FIXED_POINT_TOL,
    })
}

/// Runs every audit on freshly generated small instances.
pub fn run_validation(options: &ValidationOptions) -> Result<ValidationReport> {
    let seeds: Vec<u64> = (0..options.instances as u64).map(|i| derive_seed(options.seed, i)).collect();
    let settings = [(GarnetSpec::new(8, 3, 2, 0.0), 3), (GarnetSpec::new(5, 2, 2, 0.1), 2)];
    let jobs: Vec<(GarnetSpec, usize, u64)> = settings
        .iter()
        .flat_map(|&(spec, k)| seeds.iter().map(move |&seed| (spec, k, seed)))
        .collect();
    let gradient_audits = jobs
        .par_iter()
        .map(|&(spec, k, seed)| audit_instance(spec, k, seed, options.fault))
        .collect::<Result<Vec<_>>>()?;
    let fixed_points = seeds
        .par_iter()
        .map(|&seed| fixed_point_instance(seed))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(options.seed, 0x1AC0));
    let cosine = CosineBasis::random(30, 4, &mut rng);
    let points = random_finite_points(&cosine, options.jacobian_points, &mut rng);
    let mut jacobians = vec![audit_jacobian("cosine", &cosine, &points)?];
    if options.wrong_phase {
        let faulty = MismatchedJacobian {
            jacobian: CosineBasis::random(30, 4, &mut rng),
            features: cosine.clone(),
        };
        jacobians.push(audit_jacobian("cosine (mismatched phases)", &faulty, &points)?);
    }
    let rbf = RbfBasis::grid(4, 4, MountainCarParams::default().state_bounds())?;
    let rbf_points = random_rbf_points(&rbf, options.jacobian_points, &mut rng);
    jacobians.push(audit_jacobian("rbf", &rbf, &rbf_points)?);

    let bounds = seeds
        .par_iter()
        .map(|&seed| {
            let (mdp, ac) = garnet_setting(&GarnetSpec::new(8, 3, 2, 0.1), 3, seed, LearnerOptions::default())?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
            assumption_bounds(&mdp, &ac.basis, &ac.actor, ac.options.theta_box, 50, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let schedule = validate_schedule(&options.schedule);
    let mut report = ValidationReport {
        options: options.clone(),
        gradient_audits,
        fixed_points,
        jacobians,
        bounds,
        schedule,
        passed: false,
    };
    report.passed = report.failures().is_empty();
    Ok(report)
}

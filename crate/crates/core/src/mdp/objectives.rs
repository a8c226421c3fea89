use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::chain::{weighted_gram, weighted_gram_inverse};
use super::{bellman_apply, projection_matrix, ActorFeatures, FiniteMdp, InducedChain, SoftmaxPolicy};
use crate::{Error, Result};

/// Absolute tolerance (scaled by `max(1, |value|)`) for the two MSPBE forms.
pub const MSPBE_IDENTITY_TOL: f64 = 1e-9;

/// Exact policy gradient `∇_θη = E[ψ(x,u) d(x,y)]` using the exact
/// differential value of `chain`.
pub fn exact_policy_gradient<F: ActorFeatures<usize>>(
    mdp: &FiniteMdp,
    policy: &SoftmaxPolicy<F>,
    chain: &InducedChain,
) -> Vec<f64> {
    let n = mdp.num_states();
    let mut grad = vec![0.0; policy.theta.len()];
    for x in 0..n {
        let dx = chain.stationary[x];
        if dx == 0.0 {
            continue;
        }
        for u in 0..mdp.num_actions() {
            let p = mdp.transition(u);
            let mean_td: f64 = (0..n)
                .filter(|&y| p[(x, y)] > 0.0)
                .map(|y| p[(x, y)] * chain.td_error(mdp, x, y))
                .sum();
            let weight = dx * chain.action_probs[(x, u)] * mean_td;
            let psi = policy.likelihood_ratio(&x, u);
            for (g, v) in grad.iter_mut().zip(psi) {
                *g += weight * v;
            }
        }
    }
    grad
}

/// Exact first and second moments driving the linear critic:
/// `C = E[φφᵀ]`, `A = E[φ(φ′ − φ)ᵀ]`, `b = E[φ(g − η)]`.
#[derive(Clone, Debug)]
pub struct CriticMoments {
    pub c: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl CriticMoments {
    pub fn new(mdp: &FiniteMdp, chain: &InducedChain, phi: &DMatrix<f64>) -> Result<Self> {
        let n = chain.num_states();
        if phi.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "feature matrix rows",
                expected: n,
                found: phi.nrows(),
            });
        }
        let d = DMatrix::from_diagonal(&chain.stationary);
        let phi_t_d = phi.transpose() * d;
        let c = weighted_gram(phi, &chain.stationary);
        let a = &phi_t_d * (&chain.transition * phi - phi);
        let b = &phi_t_d * mdp.rewards().add_scalar(-chain.average_reward);
        Ok(Self { c, a, b })
    }

    /// `E[dφ] = A r + b`.
    pub fn mean_td_feature(&self, r: &DVector<f64>) -> DVector<f64> {
        &self.a * r + &self.b
    }
}

/// Exact critic objectives at weights `r` for basis matrix `Φ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Objectives {
    /// `½‖Φr − J‖²_D`.
    pub mse: f64,
    /// `½‖T(Φr) − Φr‖²_D`.
    pub msbe: f64,
    /// `‖ΠT(Φr) − Φr‖²_D`, the norm form.
    pub mspbe: f64,
    /// `(Ar + b)ᵀ(ΦᵀDΦ)⁻¹(Ar + b)`, the w form.
    pub mspbe_w_form: f64,
    /// Mean squared TD error `½E[d²]` over `x ~ D`, `y ~ P_θ(·|x)`.
    pub mstde: f64,
}

pub fn exact_objectives(
    mdp: &FiniteMdp,
    chain: &InducedChain,
    phi: &DMatrix<f64>,
    r: &DVector<f64>,
) -> Result<Objectives> {
    if phi.ncols() != r.len() {
        return Err(Error::DimensionMismatch {
            what: "critic weights",
            expected: phi.ncols(),
            found: r.len(),
        });
    }
    let d = &chain.stationary;
    let v = phi * r;
    let tv = bellman_apply(chain, mdp, &v)?;
    let weighted_sq = |e: &DVector<f64>| -> f64 { e.iter().zip(d.iter()).map(|(e, d)| d * e * e).sum() };

    let mse = 0.5 * weighted_sq(&(&v - &chain.differential_value));
    let residual = &tv - &v;
    let msbe = 0.5 * weighted_sq(&residual);

    let pi = projection_matrix(phi, d)?;
    let mspbe = weighted_sq(&(&pi * &tv - &v));

    let moments = CriticMoments::new(mdp, chain, phi)?;
    let e = moments.mean_td_feature(r);
    let c_inv = weighted_gram_inverse(phi, d)?;
    let mspbe_w_form = e.dot(&(c_inv * &e));

    let tol = MSPBE_IDENTITY_TOL * mspbe.abs().max(mspbe_w_form.abs()).max(1.0);
    if (mspbe - mspbe_w_form).abs() > tol {
        return Err(Error::IdentityMismatch {
            norm_form: mspbe,
            w_form: mspbe_w_form,
        });
    }

    let n = chain.num_states();
    let g = mdp.rewards();
    let mut mstde = 0.0;
    for x in 0..n {
        if d[x] == 0.0 {
            continue;
        }
        let base = g[x] - chain.average_reward - v[x];
        let mut inner = 0.0;
        for y in 0..n {
            let p = chain.transition[(x, y)];
            if p > 0.0 {
                let td = base + v[y];
                inner += p * td * td;
            }
        }
        mstde += d[x] * inner;
    }
    mstde *= 0.5;

    Ok(Objectives {
        mse,
        msbe,
        mspbe,
        mspbe_w_form,
        mstde,
    })
}

//! Adaptive bases `φ(x, s)`: linear in the critic weights, nonlinear in the
//! basis parameters `s`.

mod cosine;
mod rbf;

pub use cosine::CosineBasis;
pub use rbf::RbfBasis;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::mdp::ActorFeatures;
use crate::{Error, Result};

/// Feature bound `B_φ` shared by both families.
pub const FEATURE_BOUND: f64 = 1.0;

/// Relative singular-value threshold below which a basis matrix is treated
/// as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Axis-aligned box used to project parameter iterates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower; dim],
            upper: vec![upper; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Euclidean projection onto the box.
    pub fn project(&self, v: &mut [f64]) {
        for ((x, &lo), &hi) in v.iter_mut().zip(&self.lower).zip(&self.upper) {
            *x = x.clamp(lo, hi);
        }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((x, lo), hi)| lo <= x && x <= hi)
    }
}

/// A parameterized feature map `φ(x, s) ∈ ℝ^{K_r}` with `s ∈ ℝ^{K_s}`.
pub trait AdaptiveBasis: Send + Sync {
    type State;

    /// `K_r`.
    fn num_features(&self) -> usize;

    /// `K_s`.
    fn num_params(&self) -> usize;

    /// Initial parameters `s₀`.
    fn default_params(&self) -> Vec<f64>;

    /// Box `H_P⁽ˢ⁾` for the parameter iterate.
    fn param_box(&self) -> ParamBox;

    /// Writes `φ(x, s)` into `out`.
    fn features_into(&self, s: &[f64], x: &Self::State, out: &mut [f64]) -> Result<()>;

    /// Writes the `K_r × K_s` Jacobian `∂φ_d/∂s_i` into `out`.
    fn jacobian_into(&self, s: &[f64], x: &Self::State, out: &mut DMatrix<f64>) -> Result<()>;

    /// Writes `(∂φᵀ/∂s_i) r` for every `i` into `out` (length `K_s`).
    fn param_gradient_into(&self, s: &[f64], x: &Self::State, r: &[f64], out: &mut [f64]) -> Result<()> {
        let mut jac = DMatrix::zeros(self.num_features(), self.num_params());
        self.jacobian_into(s, x, &mut jac)?;
        for (i, o) in out.iter_mut().enumerate() {
            *o = jac.column(i).iter().zip(r).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }

    fn features(&self, s: &[f64], x: &Self::State) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.num_features()];
        self.features_into(s, x, &mut out)?;
        Ok(out)
    }

    fn jacobian(&self, s: &[f64], x: &Self::State) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.num_features(), self.num_params());
        self.jacobian_into(s, x, &mut out)?;
        Ok(out)
    }
}

/// A basis over the states `0..num_states()` of a finite MDP.
pub trait FiniteBasis: AdaptiveBasis<State = usize> {
    fn num_states(&self) -> usize;
}

/// Block one-hot actor features `ξ(x, u) = (0, …, φ(x, s₀), …, 0)` from a
/// basis held at fixed parameters.
#[derive(Clone, Debug)]
pub struct BlockActorFeatures<B> {
    basis: B,
    s: Vec<f64>,
    num_actions: usize,
}

impl<B: AdaptiveBasis> BlockActorFeatures<B> {
    pub fn new(basis: B, s: Vec<f64>, num_actions: usize) -> Result<Self> {
        if s.len() != basis.num_params() {
            return Err(Error::DimensionMismatch {
                what: "actor basis parameters",
                expected: basis.num_params(),
                found: s.len(),
            });
        }
        Ok(Self { basis, s, num_actions })
    }
}

impl<B: AdaptiveBasis> ActorFeatures<B::State> for BlockActorFeatures<B> {
    fn dim(&self) -> usize {
        self.basis.num_features() * self.num_actions
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn write_features(&self, x: &B::State, u: usize, out: &mut [f64]) {
        let k = self.basis.num_features();
        out.fill(0.0);
        self.basis
            .features_into(&self.s, x, &mut out[u * k..(u + 1) * k])
            .expect("actor basis evaluates at its fixed parameters");
    }

    fn write_all(&self, x: &B::State, out: &mut [f64]) {
        let k = self.basis.num_features();
        let dim = self.dim();
        out.fill(0.0);
        self.basis
            .features_into(&self.s, x, &mut out[..k])
            .expect("actor basis evaluates at its fixed parameters");
        for u in 1..self.num_actions {
            out.copy_within(0..k, u * dim + u * k);
        }
    }
}

/// Singular-value summary of a basis matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankReport {
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Least-squares residual of the all-ones vector against the column
    /// span; near zero means `Φr = e` is attainable.
    pub constant_residual: f64,
}

/// Stacks `φ(x, s)ᵀ` over all states into the `N × K_r` matrix `Φ_s` and
/// verifies full column rank.
pub fn feature_matrix<B: FiniteBasis + ?Sized>(basis: &B, s: &[f64]) -> Result<(DMatrix<f64>, RankReport)> {
    let n = basis.num_states();
    let k = basis.num_features();
    let mut phi = DMatrix::zeros(n, k);
    let mut row = vec![0.0; k];
    for x in 0..n {
        basis.features_into(s, &x, &mut row)?;
        for (j, &v) in row.iter().enumerate() {
            phi[(x, j)] = v;
        }
    }
    let svd = phi.clone().svd(true, true);
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let top = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|&&v| v > RANK_TOL * top.max(f64::MIN_POSITIVE)).count();
    if rank < k {
        return Err(Error::RankDeficientBasis { singular_values });
    }
    let ones = DVector::from_element(n, 1.0);
    let coef = svd
        .solve(&ones, RANK_TOL * top)
        .map_err(|e| Error::InvalidModel(e.to_string()))?;
    let constant_residual = (&phi * coef - ones).norm();
    Ok((
        phi,
        RankReport {
            singular_values,
            rank,
            constant_residual,
        },
    ))
}

/// Stacks the `s_i`-derivative of every feature row: entry `i` is the
/// `N × K_r` matrix `∂Φ/∂s_i`.
pub fn feature_matrix_derivatives<B: FiniteBasis + ?Sized>(basis: &B, s: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let n = basis.num_states();
    let k = basis.num_features();
    let mut out = vec![DMatrix::zeros(n, k); basis.num_params()];
    let mut jac = DMatrix::zeros(k, basis.num_params());
    for x in 0..n {
        basis.jacobian_into(s, &x, &mut jac)?;
        for (i, m) in out.iter_mut().enumerate() {
            for d in 0..k {
                m[(x, d)] = jac[(d, i)];
            }
        }
    }
    Ok(out)
}

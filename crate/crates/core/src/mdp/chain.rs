use nalgebra::{DMatrix, DVector};

use super::{closed_class_count, ActorFeatures, FiniteMdp, SoftmaxPolicy};
use crate::{Error, Result};

/// Condition number above which the anchored Poisson system is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Smallest admissible eigenvalue of `ΦᵀDΦ`.
pub const GRAM_EIGEN_FLOOR: f64 = 1e-10;

/// Markov chain induced by a fixed policy, with its exact average reward and
/// differential value function.
#[derive(Clone, Debug)]
pub struct InducedChain {
    /// `P_θ(y|x) = Σ_u μ(u|x) P_u(y|x)`.
    pub transition: DMatrix<f64>,
    /// Stationary distribution `D`.
    pub stationary: DVector<f64>,
    /// `η = Dᵀg`.
    pub average_reward: f64,
    /// Differential value `J` anchored at `J(x*) = 0`.
    pub differential_value: DVector<f64>,
    /// Anchor state `x*`: the most probable state, lowest index on ties.
    pub recurrent_state: usize,
    /// Per-state action probabilities `μ(·|x)`, row-major `N × |U|`.
    pub action_probs: DMatrix<f64>,
}

/// Builds the chain induced by `policy` on `mdp` and solves for `D`, `η`
/// and `J`.
pub fn induced_chain<F: ActorFeatures<usize>>(
    mdp: &FiniteMdp,
    policy: &SoftmaxPolicy<F>,
) -> Result<InducedChain> {
    let n = mdp.num_states();
    let actions = mdp.num_actions();
    if policy.features.num_actions() != actions {
        return Err(Error::DimensionMismatch {
            what: "policy actions",
            expected: actions,
            found: policy.features.num_actions(),
        });
    }
    if policy.features.dim() != policy.theta.len() {
        return Err(Error::DimensionMismatch {
            what: "policy parameters",
            expected: policy.features.dim(),
            found: policy.theta.len(),
        });
    }
    let mut action_probs = DMatrix::zeros(n, actions);
    for x in 0..n {
        let probs = policy.probabilities(&x);
        for (u, p) in probs.into_iter().enumerate() {
            action_probs[(x, u)] = p;
        }
    }
    InducedChain::from_action_probs(mdp, action_probs)
}

impl InducedChain {
    /// Solves the chain given explicit action probabilities `μ(u|x)`.
    pub fn from_action_probs(mdp: &FiniteMdp, action_probs: DMatrix<f64>) -> Result<Self> {
        let n = mdp.num_states();
        let mut transition = DMatrix::zeros(n, n);
        for u in 0..mdp.num_actions() {
            let p = mdp.transition(u);
            for x in 0..n {
                let weight = action_probs[(x, u)];
                if weight == 0.0 {
                    continue;
                }
                for y in 0..n {
                    transition[(x, y)] += weight * p[(x, y)];
                }
            }
        }

        let classes = closed_class_count(&transition);
        if classes != 1 {
            return Err(Error::NonErgodicChain {
                closed_classes: classes,
            });
        }

        let stationary = stationary_distribution(&transition)?;
        let g = mdp.rewards();
        let average_reward = stationary.dot(g);
        let recurrent_state = argmax_lowest(&stationary);
        let differential_value =
            anchored_poisson_solve(&transition, g, average_reward, recurrent_state)?;

        Ok(Self {
            transition,
            stationary,
            average_reward,
            differential_value,
            recurrent_state,
            action_probs,
        })
    }

    pub fn num_states(&self) -> usize {
        self.stationary.len()
    }

    /// Exact TD error `d(x, y) = g(x) − η + J(y) − J(x)`.
    pub fn td_error(&self, mdp: &FiniteMdp, x: usize, y: usize) -> f64 {
        let j = &self.differential_value;
        mdp.rewards()[x] - self.average_reward + j[y] - j[x]
    }
}

// Solves Dᵀ(I − P) = 0, 1ᵀD = 1 by replacing the last equation with the
// normalization row.
fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let mut system = DMatrix::identity(n, n) - p.transpose();
    for j in 0..n {
        system[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    check_condition(&system)?;
    let mut d = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularSystem {
            condition: f64::INFINITY,
        })?;
    // Transient states solve to round-off around zero.
    for v in d.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total = d.sum();
    d /= total;
    Ok(d)
}

fn anchored_poisson_solve(
    p: &DMatrix<f64>,
    g: &DVector<f64>,
    eta: f64,
    anchor: usize,
) -> Result<DVector<f64>> {
    let n = p.nrows();
    let mut system = DMatrix::identity(n, n) - p;
    let mut rhs = g.add_scalar(-eta);
    for j in 0..n {
        system[(anchor, j)] = if j == anchor { 1.0 } else { 0.0 };
    }
    rhs[anchor] = 0.0;
    check_condition(&system)?;
    system.lu().solve(&rhs).ok_or(Error::SingularSystem {
        condition: f64::INFINITY,
    })
}

fn check_condition(m: &DMatrix<f64>) -> Result<()> {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularSystem { condition });
    }
    Ok(())
}

fn argmax_lowest(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Bellman operator `T v = g − η·1 + P_θ v`.
pub fn bellman_apply(
    chain: &InducedChain,
    mdp: &FiniteMdp,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = chain.num_states();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            what: "value vector",
            expected: n,
            found: v.len(),
        });
    }
    Ok(mdp.rewards().add_scalar(-chain.average_reward) + &chain.transition * v)
}

/// D-weighted projection `Π = Φ(ΦᵀDΦ)⁻¹ΦᵀD` onto the column span of `phi`.
pub fn projection_matrix(phi: &DMatrix<f64>, stationary: &DVector<f64>) -> Result<DMatrix<f64>> {
    let gram_inv = weighted_gram_inverse(phi, stationary)?;
    let d = DMatrix::from_diagonal(stationary);
    Ok(phi * gram_inv * phi.transpose() * d)
}

/// Inverse of `ΦᵀDΦ`, rejecting bases that are rank deficient in the
/// D-weighted inner product.
pub(crate) fn weighted_gram_inverse(
    phi: &DMatrix<f64>,
    stationary: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if phi.nrows() != stationary.len() {
        return Err(Error::DimensionMismatch {
            what: "feature matrix rows",
            expected: stationary.len(),
            found: phi.nrows(),
        });
    }
    let gram = weighted_gram(phi, stationary);
    let eigen = gram.clone().symmetric_eigen();
    if eigen.eigenvalues.min() <= GRAM_EIGEN_FLOOR {
        let mut singular_values: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
        singular_values.sort_by(|a, b| b.total_cmp(a));
        return Err(Error::RankDeficientBasis { singular_values });
    }
    gram.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::RankDeficientBasis {
            singular_values: eigen.eigenvalues.iter().copied().collect(),
        })
}

pub(crate) fn weighted_gram(phi: &DMatrix<f64>, stationary: &DVector<f64>) -> DMatrix<f64> {
    let mut weighted = phi.clone();
    for (mut row, &d) in weighted.row_iter_mut().zip(stationary.iter()) {
        row *= d;
    }
    phi.transpose() * weighted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::FeatureTable;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_policy(states: usize, actions: usize) -> SoftmaxPolicy<FeatureTable> {
        SoftmaxPolicy::new(vec![0.0], FeatureTable::zeros(states, actions, 1))
    }

    fn random_mdp(seed: u64, n: usize, actions: usize) -> FiniteMdp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let transitions = (0..actions)
            .map(|_| {
                let mut p = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
                for mut row in p.row_iter_mut() {
                    let s = row.sum();
                    row /= s;
                }
                p
            })
            .collect();
        let g = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        FiniteMdp::new(transitions, g).unwrap()
    }

    #[test]
    fn single_state_chain() {
        let mdp = FiniteMdp::new(vec![DMatrix::identity(1, 1)], DVector::from_vec(vec![2.5]))
            .unwrap();
        let chain = induced_chain(&mdp, &uniform_policy(1, 1)).unwrap();
        assert_eq!(chain.stationary[0], 1.0);
        assert_eq!(chain.average_reward, 2.5);
        assert_eq!(chain.differential_value[0], 0.0);
    }

    #[test]
    fn periodic_two_state_chain() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let mdp = FiniteMdp::new(vec![p], DVector::from_vec(vec![0.0, 2.0])).unwrap();
        let chain = induced_chain(&mdp, &uniform_policy(2, 1)).unwrap();
        assert!((chain.stationary[0] - 0.5).abs() < 1e-12);
        assert!((chain.stationary[1] - 0.5).abs() < 1e-12);
        assert!((chain.average_reward - 1.0).abs() < 1e-12);
        assert_eq!(chain.recurrent_state, 0);
        let j = &chain.differential_value;
        assert_eq!(j[0], 0.0);
        // J(0) = g(0) − η + J(1) and J(1) = g(1) − η + J(0).
        assert!((j[0] - (0.0 - 1.0 + j[1])).abs() < 1e-12);
        assert!((j[1] - (2.0 - 1.0 + j[0])).abs() < 1e-12);
    }

    #[test]
    fn non_ergodic_chain_is_rejected() {
        let mdp = FiniteMdp::new(vec![DMatrix::identity(2, 2)], DVector::zeros(2)).unwrap();
        let err = induced_chain(&mdp, &uniform_policy(2, 1)).unwrap_err();
        assert!(matches!(err, Error::NonErgodicChain { closed_classes: 2 }));
    }

    #[test]
    fn chain_invariants_on_random_models() {
        for seed in 0..20 {
            let mdp = random_mdp(seed, 7, 3);
            let chain = induced_chain(&mdp, &uniform_policy(7, 3)).unwrap();
            let d = &chain.stationary;
            let residual = d.transpose() * &chain.transition - d.transpose();
            assert!(residual.amax() < 1e-10);
            assert!((d.sum() - 1.0).abs() < 1e-12);
            assert!((chain.average_reward - d.dot(mdp.rewards())).abs() < 1e-12);
            let tj = bellman_apply(&chain, &mdp, &chain.differential_value).unwrap();
            assert!((tj - &chain.differential_value).amax() < 1e-10);
            assert_eq!(chain.differential_value[chain.recurrent_state], 0.0);
        }
    }

    #[test]
    fn td_error_has_zero_stationary_mean() {
        let mdp = random_mdp(4, 6, 2);
        let chain = induced_chain(&mdp, &uniform_policy(6, 2)).unwrap();
        let mut mean = 0.0;
        for x in 0..6 {
            for y in 0..6 {
                mean += chain.stationary[x] * chain.transition[(x, y)] * chain.td_error(&mdp, x, y);
            }
        }
        assert!(mean.abs() < 1e-10);
    }

    #[test]
    fn bellman_of_zero_is_centered_reward() {
        let mdp = random_mdp(8, 4, 2);
        let chain = induced_chain(&mdp, &uniform_policy(4, 2)).unwrap();
        let out = bellman_apply(&chain, &mdp, &DVector::zeros(4)).unwrap();
        assert!((out - mdp.rewards().add_scalar(-chain.average_reward)).amax() < 1e-15);
    }

    #[test]
    fn bellman_matches_direct_summation() {
        let mdp = random_mdp(21, 4, 3);
        let chain = induced_chain(&mdp, &uniform_policy(4, 3)).unwrap();
        let v = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.7]);
        let out = bellman_apply(&chain, &mdp, &v).unwrap();
        for x in 0..4 {
            let mut expect = mdp.rewards()[x] - chain.average_reward;
            for y in 0..4 {
                let mut p = 0.0;
                for u in 0..3 {
                    p += chain.action_probs[(x, u)] * mdp.transition(u)[(x, y)];
                }
                expect += p * v[y];
            }
            assert!((out[x] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn bellman_rejects_wrong_length() {
        let mdp = random_mdp(1, 3, 1);
        let chain = induced_chain(&mdp, &uniform_policy(3, 1)).unwrap();
        assert!(matches!(
            bellman_apply(&chain, &mdp, &DVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn identity_basis_projects_onto_everything() {
        let d = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let pi = projection_matrix(&DMatrix::identity(4, 4), &d).unwrap();
        assert!((pi - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn constant_basis_projection_averages() {
        let n = 5;
        let d = DVector::from_element(n, 1.0 / n as f64);
        let pi = projection_matrix(&DMatrix::from_element(n, 1, 1.0), &d).unwrap();
        assert!((pi - DMatrix::from_element(n, n, 1.0 / n as f64)).amax() < 1e-12);
    }

    #[test]
    fn projection_is_weighted_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let phi = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let mut d = DVector::from_fn(6, |_, _| rng.random_range(0.05..1.0));
        d /= d.sum();
        let pi = projection_matrix(&phi, &d).unwrap();
        assert!((&pi * &pi - &pi).amax() < 1e-9);
        let v = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
        // Normal equations of min_r ‖Φr − v‖²_D, solved independently by QR
        // on the √D-scaled system.
        let sqrt_d = d.map(f64::sqrt);
        let mut scaled = phi.clone();
        for (mut row, &w) in scaled.row_iter_mut().zip(sqrt_d.iter()) {
            row *= w;
        }
        let rhs = v.component_mul(&sqrt_d);
        let qr = scaled.clone().qr();
        let r = qr.r().solve_upper_triangular(&(qr.q().transpose() * rhs)).unwrap();
        assert!((&pi * &v - &phi * r).amax() < 1e-10);
        let resid = &v - &pi * &v;
        let orth = phi.transpose() * DMatrix::from_diagonal(&d) * resid;
        assert!(orth.amax() < 1e-12);
    }

    #[test]
    fn rank_deficient_basis_is_rejected() {
        let d = DVector::from_element(3, 1.0 / 3.0);
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            projection_matrix(&phi, &d),
            Err(Error::RankDeficientBasis { .. })
        ));
    }
}

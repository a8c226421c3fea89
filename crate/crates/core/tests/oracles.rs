//! Exact quantities checked against independent computations: power
//! iteration, simulation, least squares and direct summation.

use abac::algorithms::{Algorithm, Learner, LearnerOptions, PowerSchedule, StepSchedule, TimeScale, TransitionSample};
use abac::basis::{feature_matrix, AdaptiveBasis, CosineBasis};
use abac::env::{derive_seed, Environment, GarnetSpec};
use abac::experiment::{garnet_problem, stream_seed, GarnetActorCritic};
use abac::mdp::{bellman_apply, projection_matrix, FiniteMdp, InducedChain};
use abac::oracle::{
    chain_at, expected_directions, finite_difference, msbe_gradient_s, objectives_at, relative_error, td_fixed_point,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setting(spec: GarnetSpec, k: usize, seed: u64) -> (FiniteMdp, GarnetActorCritic, Vec<f64>, InducedChain) {
    let (garnet, ac) = garnet_problem(&spec, k, seed, StepSchedule::default(), LearnerOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 7));
    let theta: Vec<f64> = (0..ac.initial_state().theta.len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let chain = chain_at(&ac, &garnet.mdp, &theta).unwrap();
    (garnet.mdp, ac, theta, chain)
}

#[test]
fn visitation_frequencies_match_stationary_distribution() {
    let spec = GarnetSpec::new(10, 3, 2, 0.1);
    let (garnet, ac) = garnet_problem(&spec, 3, 11, StepSchedule::default(), LearnerOptions::default()).unwrap();
    let theta = ac.initial_state().theta;
    let chain = chain_at(&ac, &garnet.mdp, &theta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut x = garnet.initial_state(&mut rng);
    let samples = 1_000_000;
    let mut counts = vec![0u64; spec.states];
    for _ in 0..samples {
        counts[x] += 1;
        let u = ac.select_action(&theta, &x, &mut rng);
        x = garnet.transition(&x, u, &mut rng).unwrap().next;
    }
    let worst = counts
        .iter()
        .zip(chain.stationary.iter())
        .map(|(&c, d)| (c as f64 / samples as f64 - d).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 0.01, "visitation error {worst}");
}

#[test]
fn stationary_distribution_matches_power_iteration() {
    for seed in 0..5 {
        let (_, _, _, chain) = setting(GarnetSpec::new(5, 2, 2, 0.1), 2, seed);
        let n = chain.num_states();
        // Lazy chain: same stationary distribution, aperiodic.
        let lazy = (&chain.transition + DMatrix::identity(n, n)) * 0.5;
        let mut d = DVector::from_element(n, 1.0 / n as f64);
        for _ in 0..1_000_000 {
            let next = lazy.tr_mul(&d);
            let done = (&next - &d).amax() < 1e-16;
            d = next;
            if done {
                break;
            }
        }
        assert!((&d - &chain.stationary).amax() <= 1e-8, "seed {seed}");
    }
}

#[test]
fn differential_value_matches_simulated_return_sums() {
    let (mdp, _, _, chain) = setting(GarnetSpec::new(5, 2, 2, 0.1), 2, 3);
    let n = chain.num_states();
    let anchor = chain.recurrent_state;
    let cumulative: Vec<Vec<f64>> = (0..n)
        .map(|x| {
            chain
                .transition
                .row(x)
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let trajectories = 1_000_000;
    for start in (0..n).filter(|&x| x != anchor) {
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..trajectories {
            let mut x = start;
            let mut total = 0.0;
            while x != anchor {
                total += mdp.rewards()[x] - chain.average_reward;
                let draw: f64 = rng.random();
                x = cumulative[x].iter().position(|&c| draw < c).unwrap_or(n - 1);
            }
            sum += total;
            sum_sq += total * total;
        }
        let mean = sum / trajectories as f64;
        let se = ((sum_sq / trajectories as f64 - mean * mean) / trajectories as f64).sqrt();
        let j = chain.differential_value[start];
        assert!((mean - j).abs() <= 5.0 * se, "state {start}: simulated {mean} vs exact {j} (se {se})");
    }
}

#[test]
fn bellman_operator_matches_hand_expansion() {
    let (mdp, _, _, chain) = setting(GarnetSpec::new(4, 2, 2, 0.0), 2, 5);
    let v = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.7]);
    let tv = bellman_apply(&chain, &mdp, &v).unwrap();
    for x in 0..4 {
        let expected = mdp.rewards()[x] - chain.average_reward + (0..4).map(|y| chain.transition[(x, y)] * v[y]).sum::<f64>();
        assert!((tv[x] - expected).abs() <= 1e-14);
    }
    let zero = bellman_apply(&chain, &mdp, &DVector::zeros(4)).unwrap();
    assert!((zero - mdp.rewards().add_scalar(-chain.average_reward)).amax() <= 1e-15);
}

#[test]
fn projection_matches_weighted_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let phi = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
    let raw = DVector::from_fn(6, |_, _| rng.random_range(0.05..1.0));
    let d = &raw / raw.sum();
    let pi = projection_matrix(&phi, &d).unwrap();
    let sqrt_d = DMatrix::from_diagonal(&d.map(f64::sqrt));
    let svd = (&sqrt_d * &phi).svd(true, true);
    for _ in 0..10 {
        let v = DVector::from_fn(6, |_, _| rng.random_range(-3.0..3.0));
        let r = svd.solve(&(&sqrt_d * &v), 1e-14).unwrap();
        assert!((&pi * &v - &phi * r).amax() <= 1e-10);
    }
    let ones = DMatrix::from_element(5, 1, 1.0);
    let uniform = DVector::from_element(5, 0.2);
    let avg = projection_matrix(&ones, &uniform).unwrap();
    assert!((avg - DMatrix::from_element(5, 5, 0.2)).amax() <= 1e-14);
}

#[test]
fn full_basis_td_fixed_point_has_zero_mean_td_feature() {
    let spec = GarnetSpec::new(6, 2, 2, 0.1);
    let (mdp, _, _, chain) = setting(spec, 2, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let basis = CosineBasis::random(6, 6, &mut rng);
    let (phi, _) = feature_matrix(&basis, &basis.default_params()).unwrap();
    let r = phi.clone().lu().solve(&chain.differential_value).unwrap();
    let d = &chain.stationary;
    let mut mean = DVector::zeros(6);
    for x in 0..6 {
        for y in 0..6 {
            let td = chain.td_error(&mdp, x, y);
            mean += phi.row(x).transpose() * (d[x] * chain.transition[(x, y)] * td);
        }
    }
    assert!(mean.amax() <= 1e-10);
    let objectives = abac::mdp::exact_objectives(&mdp, &chain, &phi, &r).unwrap();
    assert!(objectives.mse <= 1e-20 && objectives.msbe <= 1e-20 && objectives.mspbe <= 1e-20);
    // Any critic with Φr = J is a TD fixed point.
    let td_r = td_fixed_point(&mdp, &chain, &phi);
    assert!(td_r.is_err() || (&phi * td_r.unwrap() - &chain.differential_value).amax() <= 1e-6);
}

#[test]
fn analytic_msbe_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let (mdp, ac, _, chain) = setting(GarnetSpec::new(8, 3, 2, 0.1), 3, seed);
        let r = vec![0.4, -1.0, 0.8];
        let s = vec![0.5 + 0.3 * seed as f64];
        let analytic = msbe_gradient_s(&mdp, &chain, &ac.basis, &r, &s).unwrap();
        let numeric = finite_difference(
            |s| objectives_at(&mdp, &chain, &ac.basis, &r, s).unwrap().msbe,
            &s,
            1e-5,
        );
        assert!(relative_error(&analytic, &numeric) <= 1e-5, "seed {seed}");
    }
}

/// `argmin_r ½E[d²] = −E[ΔΔᵀ]⁻¹E[Δ(g − η)]`, `Δ = φ(y) − φ(x)`, by summation.
fn mstde_minimizer(mdp: &FiniteMdp, chain: &InducedChain, phi: &DMatrix<f64>) -> DVector<f64> {
    let (n, k) = phi.shape();
    let mut m = DMatrix::zeros(k, k);
    let mut v = DVector::zeros(k);
    for x in 0..n {
        for y in 0..n {
            let w = chain.stationary[x] * chain.transition[(x, y)];
            let delta = (phi.row(y) - phi.row(x)).transpose();
            m += &delta * delta.transpose() * w;
            v += &delta * (w * (mdp.rewards()[x] - chain.average_reward));
        }
    }
    -m.lu().solve(&v).unwrap()
}

/// Dense minimizer of the exact MSBE over `r`.
fn msbe_minimizer(mdp: &FiniteMdp, chain: &InducedChain, phi: &DMatrix<f64>) -> DVector<f64> {
    let m = &chain.transition * phi - phi;
    let sqrt_d = DMatrix::from_diagonal(&chain.stationary.map(f64::sqrt));
    let c = mdp.rewards().add_scalar(-chain.average_reward);
    let lhs = &sqrt_d * m;
    let rhs = -(&sqrt_d * c);
    lhs.svd(true, true).solve(&rhs, 1e-14).unwrap()
}

#[test]
fn abbe_expected_critic_direction_vanishes_at_mean_squared_td_minimizer() {
    for seed in 0..5 {
        let (mdp, ac, theta, chain) = setting(GarnetSpec::new(5, 2, 2, 0.1), 2, seed);
        let s = ac.basis.default_params();
        let (phi, _) = feature_matrix(&ac.basis, &s).unwrap();
        let r_star = mstde_minimizer(&mdp, &chain, &phi);
        let mut state = ac.initial_state();
        state.theta = theta;
        state.eta = chain.average_reward;
        state.r = r_star.as_slice().to_vec();
        let dirs = expected_directions(&ac, &mdp, &chain, Algorithm::Abbe, &state, None).unwrap();
        assert!(dirs.r.iter().all(|v| v.abs() <= 1e-12), "seed {seed}: {:?}", dirs.r);

        // Under stochastic transitions the MSBE minimizer is a different point.
        state.r = msbe_minimizer(&mdp, &chain, &phi).as_slice().to_vec();
        let at_msbe = expected_directions(&ac, &mdp, &chain, Algorithm::Abbe, &state, None).unwrap();
        assert!(at_msbe.r.iter().any(|v| v.abs() > 1e-6), "seed {seed}");
    }
}

#[test]
fn abbe_critic_converges_to_mean_squared_td_minimizer() {
    let schedule = StepSchedule::default()
        .with(TimeScale::Critic, PowerSchedule::new(1.0, 1000.0, 0.6))
        .with_frozen(TimeScale::Actor)
        .with_frozen(TimeScale::Basis);
    for seed in 0..3 {
        let spec = GarnetSpec::new(5, 2, 2, 0.1);
        let (garnet, ac) = garnet_problem(&spec, 2, seed, schedule, LearnerOptions::default()).unwrap();
        let chain = chain_at(&ac, &garnet.mdp, &ac.initial_state().theta).unwrap();
        let (phi, _) = feature_matrix(&ac.basis, &ac.basis.default_params()).unwrap();
        let r_star = mstde_minimizer(&garnet.mdp, &chain, &phi);
        let mut learner = Learner::new(ac, Algorithm::Abbe).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed));
        let mut x = garnet.initial_state(&mut rng);
        for _ in 0..1_000_000 {
            let u = learner.select_action(&x, &mut rng);
            let out = garnet.transition(&x, u, &mut rng).unwrap();
            learner.step(&TransitionSample { x, u, g: out.reward, y: out.next }).unwrap();
            x = out.next;
        }
        let err = (DVector::from_column_slice(&learner.state.r) - r_star).amax();
        assert!(err <= 0.05, "seed {seed}: |r - r*| = {err}");
    }
}

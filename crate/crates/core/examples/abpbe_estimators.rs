//! Runs the ABPBE estimator bank with the policy and basis frozen and
//! compares its `A` and `w` estimates with the exact moments.

use abac::algorithms::{Algorithm, Learner, LearnerOptions, StepSchedule, TimeScale, TransitionSample};
use abac::basis::feature_matrix;
use abac::env::{Environment, GarnetSpec};
use abac::experiment::{garnet_problem, stream_seed};
use abac::mdp::CriticMoments;
use abac::oracle::chain_at;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> abac::Result<()> {
    let seed = 5;
    let schedule = StepSchedule::default()
        .with_frozen(TimeScale::Basis)
        .with_frozen(TimeScale::Actor)
        .with_frozen(TimeScale::Critic);
    let spec = GarnetSpec::new(5, 2, 2, 0.1);
    let (garnet, ac) = garnet_problem(&spec, 2, seed, schedule, LearnerOptions::default())?;
    let mut learner = Learner::new(ac, Algorithm::Abpbe)?;
    learner.state.r = vec![0.5, -0.25];

    let chain = chain_at(&learner.ac, &garnet.mdp, &learner.state.theta)?;
    learner.state.eta = chain.average_reward;
    let (phi, _) = feature_matrix(&learner.ac.basis, &learner.state.s)?;
    let moments = CriticMoments::new(&garnet.mdp, &chain, &phi)?;
    let r = DVector::from_column_slice(&learner.state.r);
    let w_exact = moments.c.clone().lu().solve(&(&moments.a * &r + &moments.b)).expect("C is invertible");

    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed));
    let mut x = garnet.initial_state(&mut rng);
    for n in 1..=200_000u64 {
        let u = learner.select_action(&x, &mut rng);
        let out = garnet.transition(&x, u, &mut rng)?;
        learner.step(&TransitionSample { x, u, g: out.reward, y: out.next })?;
        x = out.next;
        if n % 50_000 == 0 {
            let bank = learner.bank.as_ref().expect("ABPBE bank");
            println!(
                "{n:>7}  |A - A*|_F {:.4}  |w - w*|_inf {:.4}",
                (&bank.a - &moments.a).norm(),
                (&bank.w - &w_exact).amax()
            );
        }
    }
    Ok(())
}

fn main() -> abac::Result<()> {
    run_example()
}

//! Runs ABTD on a small Garnet problem and prints the exact objectives of
//! the iterate every 20k steps.

use abac::algorithms::{Algorithm, Learner, LearnerOptions, StepSchedule, TransitionSample};
use abac::env::{Environment, GarnetSpec};
use abac::experiment::{garnet_problem, probe, stream_seed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> abac::Result<()> {
    let seed = 7;
    let spec = GarnetSpec::new(10, 3, 2, 0.1);
    let (garnet, ac) = garnet_problem(&spec, 3, seed, StepSchedule::default(), LearnerOptions::default())?;
    let mut learner = Learner::new(ac, Algorithm::Abtd)?;

    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed));
    let mut x = garnet.initial_state(&mut rng);
    println!("{:>7} {:>9} {:>9} {:>9} {:>7}", "step", "eta", "mse", "mspbe", "s");
    for n in 0..=100_000u64 {
        if n % 20_000 == 0 {
            let row = probe(&learner.ac, &garnet.mdp, &learner.state);
            println!(
                "{n:>7} {:>9.4} {:>9.4} {:>9.4} {:>7.3}",
                row.exact_eta, row.mse, row.mspbe, learner.state.s[0]
            );
        }
        let u = learner.select_action(&x, &mut rng);
        let out = garnet.transition(&x, u, &mut rng)?;
        learner.step(&TransitionSample { x, u, g: out.reward, y: out.next })?;
        x = out.next;
    }
    Ok(())
}

fn main() -> abac::Result<()> {
    run_example()
}

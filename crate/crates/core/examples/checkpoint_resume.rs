//! Saves an ABPBE run halfway, restores it from disk and shows that the
//! resumed run ends exactly where the uninterrupted one does.

use abac::algorithms::{Algorithm, Learner, LearnerOptions, StepSchedule, TransitionSample};
use abac::basis::CosineBasis;
use abac::checkpoint::Checkpoint;
use abac::env::{Environment, GarnetInstance, GarnetSpec};
use abac::experiment::garnet_problem;
use abac::mdp::FeatureTable;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn advance(
    learner: &mut Learner<CosineBasis, FeatureTable>,
    env: &GarnetInstance,
    rng: &mut ChaCha8Rng,
    x: &mut usize,
    steps: u64,
) -> abac::Result<()> {
    for _ in 0..steps {
        let u = learner.select_action(x, rng);
        let out = env.transition(x, u, rng)?;
        learner.step(&TransitionSample { x: *x, u, g: out.reward, y: out.next })?;
        *x = out.next;
    }
    Ok(())
}

pub fn run_example() -> abac::Result<()> {
    let seed = 21;
    let spec = GarnetSpec::new(8, 2, 2, 0.1);
    let (env, ac) = garnet_problem(&spec, 3, seed, StepSchedule::default(), LearnerOptions::default())?;

    let mut straight = Learner::new(ac.clone(), Algorithm::Abpbe)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = env.initial_state(&mut rng);
    advance(&mut straight, &env, &mut rng, &mut x, 20_000)?;

    let mut first = Learner::new(ac.clone(), Algorithm::Abpbe)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = env.initial_state(&mut rng);
    advance(&mut first, &env, &mut rng, &mut x, 10_000)?;

    let dir = std::env::temp_dir().join(format!("abac-checkpoint-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("run.ckpt");
    Checkpoint {
        algorithm: first.algorithm,
        seed,
        rng_word_pos: rng.get_word_pos(),
        schedule: ac.schedule,
        state: first.state.clone(),
        bank: first.bank.clone(),
        env_state: vec![x as f64],
    }
    .save(&path)?;

    let restored = Checkpoint::load(&path)?;
    std::fs::remove_dir_all(&dir)?;
    let mut resumed = Learner::new(ac, restored.algorithm)?;
    resumed.state = restored.state.clone();
    resumed.bank = restored.bank.clone();
    let mut rng = restored.rng();
    let mut x = restored.env_state[0] as usize;
    advance(&mut resumed, &env, &mut rng, &mut x, 10_000)?;

    println!("uninterrupted r = {:?}", straight.state.r);
    println!("resumed       r = {:?}", resumed.state.r);
    println!("identical: {}", resumed.state == straight.state && resumed.bank == straight.bank);
    Ok(())
}

fn main() -> abac::Result<()> {
    run_example()
}

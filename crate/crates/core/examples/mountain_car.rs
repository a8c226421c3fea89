//! Compares ABTD with 16 adaptive RBFs against SARSA with 64 fixed RBFs on
//! a short mountain-car run.

use abac::algorithms::{Algorithm, LearnerOptions, SarsaConfig, StepSchedule};
use abac::env::MountainCarParams;
use abac::experiment::{run_mountain_car_repeat, CarSeries};

pub fn run_example() -> abac::Result<()> {
    let episodes = 30;
    for (algorithm, centers) in [(Algorithm::Abtd, 16), (Algorithm::Sarsa, 64)] {
        let series = CarSeries {
            name: format!("{}-m{centers}", algorithm.name()),
            algorithm,
            centers,
            params: MountainCarParams::default(),
            episodes,
            schedule: StepSchedule::default(),
            options: LearnerOptions::default(),
            sarsa: SarsaConfig::default(),
        };
        let repeat = run_mountain_car_repeat(&series, 0, 3)?;
        let first = repeat.steps.iter().take(5).sum::<u64>() as f64 / 5.0;
        let last = repeat.final_mean_steps(5).unwrap_or(f64::NAN);
        println!("{:<10} first 5 episodes {first:>8.1} steps, last 5 {last:>8.1}", series.name);
    }
    Ok(())
}

fn main() -> abac::Result<()> {
    run_example()
}

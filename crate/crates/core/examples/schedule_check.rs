//! Checks the default four-time-scale schedule and a broken one whose
//! critic decays no faster than the estimators.

use abac::algorithms::{validate_schedule, PowerSchedule, StepSchedule, TimeScale};

fn report(label: &str, schedule: &StepSchedule) {
    let report = validate_schedule(schedule);
    println!("{label}: {}", if report.passed { "ok" } else { "rejected" });
    for check in report.checks.iter().filter(|c| !c.passed) {
        println!("  {}: {}", check.name, check.detail);
    }
    for row in report.ratios.iter().filter(|r| r.n == 1_000_000) {
        println!("  alpha{}/alpha{} at n = 1e6: {:.3e}", row.pair.0, row.pair.1, row.ratio);
    }
}

pub fn run_example() -> abac::Result<()> {
    let default = StepSchedule::default();
    for (n, steps) in [0u64, 1000, 100_000].map(|n| (n, default.steps(n))) {
        let steps: Vec<String> = steps.iter().map(|a| format!("{a:.3e}")).collect();
        println!("n = {n:>6}: {}", steps.join("  "));
    }
    report("default", &default);
    let broken = default.with(TimeScale::Critic, PowerSchedule::new(1.0, 100.0, 0.55));
    report("critic at estimator rate", &broken);
    Ok(())
}

fn main() -> abac::Result<()> {
    run_example()
}

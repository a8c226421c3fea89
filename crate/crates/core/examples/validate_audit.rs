//! Runs the gradient, fixed-point and Jacobian audits on a few random
//! instances, then again with a deliberately mismatched cosine Jacobian.

use abac::oracle::{run_validation, ValidationOptions};

pub fn run_example() -> abac::Result<()> {
    let options = ValidationOptions {
        seed: 4,
        instances: 2,
        jacobian_points: 20,
        ..ValidationOptions::default()
    };
    let clean = run_validation(&options)?;
    for audit in &clean.jacobians {
        println!("{:<8} max Jacobian error {:.2e}", audit.family, audit.max_error);
    }
    println!("clean audit passed: {}", clean.passed);

    let faulty = run_validation(&ValidationOptions { wrong_phase: true, ..options })?;
    println!("wrong-phase audit passed: {}", faulty.passed);
    for failure in faulty.failures() {
        println!("  failed: {failure}");
    }
    Ok(())
}

fn main() -> abac::Result<()> {
    run_example()
}

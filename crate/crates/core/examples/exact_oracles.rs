//! Exact quantities of the chain induced by a fixed policy on a Garnet
//! instance: stationary distribution, average reward, differential values
//! and the critic objectives at the TD fixed point.

use abac::algorithms::{LearnerOptions, StepSchedule};
use abac::basis::feature_matrix;
use abac::env::GarnetSpec;
use abac::experiment::garnet_problem;
use abac::oracle::{chain_at, objectives_at, td_fixed_point};

pub fn run_example() -> abac::Result<()> {
    let spec = GarnetSpec::new(6, 2, 2, 0.1);
    let (garnet, ac) = garnet_problem(&spec, 2, 11, StepSchedule::default(), LearnerOptions::default())?;
    let state = ac.initial_state();
    let chain = chain_at(&ac, &garnet.mdp, &state.theta)?;

    println!("stationary  {:.4?}", chain.stationary.as_slice());
    println!("eta         {:.6}", chain.average_reward);
    println!("J           {:.4?}", chain.differential_value.as_slice());

    let (phi, _) = feature_matrix(&ac.basis, &state.s)?;
    let r = td_fixed_point(&garnet.mdp, &chain, &phi)?;
    let r: Vec<f64> = r.iter().copied().collect();
    let o = objectives_at(&garnet.mdp, &chain, &ac.basis, &r, &state.s)?;
    println!("TD fixed point r = {r:.4?}");
    println!("mse {:.3e}  msbe {:.3e}  mspbe {:.3e}  mstde {:.3e}", o.mse, o.msbe, o.mspbe, o.mstde);
    Ok(())
}

fn main() -> abac::Result<()> {
    run_example()
}

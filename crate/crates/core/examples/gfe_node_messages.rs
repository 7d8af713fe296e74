//! The goal-observation node in isolation: ρ, the direct and Newton state
//! messages, the message towards a Dirichlet goal and the average energy.
//!
//! Usage: cargo run --release --example gfe_node_messages

use cffg::dist::{column_entropies, ProbVector, TransitionMatrix};
use cffg::gfe::{
    average_energy, fixed_point_residual, message_to_goal, message_to_state_direct,
    message_to_state_newton, rho, NewtonConfig, ObservationStats,
};
use ndarray::array;

fn main() -> cffg::Result<()> {
    // three states, three outcomes; the goal prefers outcome 0
    let a = TransitionMatrix::new(array![[0.8, 0.1, 0.3], [0.1, 0.8, 0.3], [0.1, 0.1, 0.4]])?;
    let c = array![0.7, 0.2, 0.1];
    let stats = ObservationStats::new(a.as_array().clone(), column_entropies(&a), c.mapv(f64::ln))?;
    let d = ProbVector::new(array![0.2, 0.5, 0.3])?;

    let r = rho(&stats, d.as_array())?;
    println!("rho at the prior          {r}");
    println!(
        "direct message sigma(rho) {}",
        message_to_state_direct(&r)?.probs()
    );

    let out = message_to_state_newton(&d, &stats, &NewtonConfig::default())?;
    println!("indirect message          {}", out.message.probs());
    println!("stationary q(z)           {}", out.z_bar.as_array());
    let resid = fixed_point_residual(&stats, &d.as_array().mapv(f64::ln), out.z_bar.as_array())?;
    println!("newton iterations {}, residual {resid:.2e}", out.iterations);

    let z = out.z_bar.as_array();
    println!(
        "average energy U = {:.6} nats",
        average_energy(&rho(&stats, z)?, z)
    );
    println!(
        "message to a Dirichlet goal: Dir({})",
        message_to_goal(a.as_array(), z)?.alpha().column(0)
    );
    Ok(())
}

//! Importance-sampled expectations of a Dirichlet belief reweighted by a
//! non-conjugate log-message, for growing sample counts.
//!
//! Usage: cargo run --release --example importance_sampling

use cffg::dist::Dirichlet;
use cffg::gfe::{importance_expectations, LogMessage};
use ndarray::array;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cffg::Result<()> {
    let prior = Dirichlet::new(array![[5.0, 1.0], [1.0, 5.0]])?;
    // favours a large A[0, 0] and low-entropy columns
    let msg = LogMessage {
        linear: array![[4.0, 0.0], [0.0, 0.0]],
        entropy_weight: array![1.0, 1.0],
    };
    println!("prior mean\n{}", prior.mean().as_array());
    for n in [10, 100, 1_000, 10_000, 100_000] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let est = importance_expectations(&prior, &msg, n, &mut rng)?;
        println!(
            "n = {n:>6}  A[0,0] = {:.4}  A[1,1] = {:.4}  h = [{:.4}, {:.4}]  ESS = {:.1}",
            est.a_bar.as_array()[[0, 0]],
            est.a_bar.as_array()[[1, 1]],
            est.h_bar[0],
            est.h_bar[1],
            est.ess
        );
    }
    Ok(())
}

//! Independent GFE learners next to the known-model reference agent: wins
//! per run and the win average per trial.
//!
//! Usage: cargo run --release --example tmaze_aggregate -- [runs] [trials] [seed]

use cffg::tmaze::{run_aggregate, TmazeSettings};

fn main() {
    let mut args = std::env::args().skip(1);
    let runs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let trials: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);
    let res = match run_aggregate(&TmazeSettings::default(), runs, trials, seed) {
        Ok(r) => r,
        Err((_, e)) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    println!("wins per run         {:?}", res.wins_per_run());
    println!("ideal wins per run   {:?}", res.ideal_wins_per_run());
    println!("trial  learner  ideal");
    for (s, (m, i)) in res.win_mean().iter().zip(res.ideal_win_mean()).enumerate() {
        println!("{:>5}  {m:>7.2}  {i:>5.2}", s + 1);
    }
}

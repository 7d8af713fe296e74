//! Goal learning: a known observation model with Dirichlet hyper-priors on the
//! goal statistics. Prints which outcome statistics were reinforced.
//!
//! Usage: cargo run --release --example goal_learning -- [trials] [seed]

use cffg::tmaze::{run_goal_learning, Outcome, Position, TmazeSettings, OUTCOMES};

fn label(i: usize) -> String {
    format!(
        "{}@{}",
        Outcome::ALL[i % OUTCOMES].label(),
        Position::ALL[i / OUTCOMES].label()
    )
}

fn main() {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);
    let result = match run_goal_learning(&TmazeSettings::default(), trials, seed) {
        Ok(r) => r,
        Err((done, e)) => {
            eprintln!("failed after {} trials: {e}", done.len());
            std::process::exit(1);
        }
    };
    for r in &result.records {
        let moves: Vec<&str> = r.actions.iter().map(|p| p.label()).collect();
        let obs: Vec<String> = r.observations.iter().map(|o| o.label()).collect();
        println!(
            "trial {:>2}  {:<4}  {}",
            r.trial,
            moves.join(","),
            obs.join(",")
        );
    }
    let last = result.reinforced.last().expect("at least one trial");
    for (k, diff) in last.iter().enumerate() {
        println!("c{} - c{},0 (mass {:.1}):", k + 1, k + 1, diff.sum());
        for (i, v) in diff.iter().enumerate().filter(|(_, v)| **v > 1e-9) {
            println!("  {:<6} {v:.2}", label(i));
        }
    }
}

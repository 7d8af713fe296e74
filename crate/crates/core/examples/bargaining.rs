//! A seller offering the cue to a T-maze buyer for a share of the reward.
//!
//! Usage: cargo run --release --example bargaining -- [trials] [seed]

use cffg::engine::EngineConfig;
use cffg::tmaze::{run_bargaining, OFFER_LEVELS};

fn main() {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);
    let levels = OFFER_LEVELS;
    let result = match run_bargaining(&levels, 2.0, 0.1, EngineConfig::default(), trials, seed) {
        Ok(r) => r,
        Err((done, e)) => {
            eprintln!("failed after {} trials: {e}", done.len());
            std::process::exit(1);
        }
    };
    for r in &result.records {
        let moves: Vec<&str> = r.buyer.actions.iter().map(|p| p.label()).collect();
        println!(
            "trial {:>2}  offer {:.2}  {:<8}  buyer {}",
            r.trial,
            r.state.offer,
            if r.state.accepted {
                "accepted"
            } else {
                "declined"
            },
            moves.join(",")
        );
    }
    println!("acceptance per level:");
    for (l, rate) in levels.iter().zip(result.acceptance_rates()) {
        match rate {
            Some(p) => println!("  {l:.2}  {p:.2}"),
            None => println!("  {l:.2}  -"),
        }
    }
}

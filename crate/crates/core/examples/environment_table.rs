//! Empirical outcome frequencies of the T-maze environment per position and
//! reward arm, next to the outcome table they are drawn from.
//!
//! Usage: cargo run --release --example environment_table -- [samples] [alpha]

use cffg::tmaze::{
    env_step, outcome_probabilities, stream_rng, MazeState, Outcome, Position, RewardArm,
};

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let alpha: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.9);
    let mut rng = stream_rng(7, 0);
    println!(
        "pos arm   {}",
        Outcome::ALL.map(|o| format!("{:>16}", o.label())).join("")
    );
    for p in Position::ALL {
        for arm in [RewardArm::RL, RewardArm::RR] {
            let mut counts = [0usize; 4];
            for _ in 0..n {
                let (obs, _) = env_step(MazeState::start(arm), p, alpha, &mut rng);
                counts[obs.outcome.index()] += 1;
            }
            let expect = outcome_probabilities(p, arm, alpha);
            let cells: Vec<String> = counts
                .iter()
                .zip(expect)
                .map(|(&c, e)| format!("{:>8.4} ({:.2})", c as f64 / n as f64, e))
                .collect();
            println!("{:<3} {:<4}{}", p.label(), arm.label(), cells.join(""));
        }
    }
}

//! One GFE agent learning the T-maze over a run of trials.
//!
//! Usage: cargo run --release --example tmaze_single -- [trials] [seed] [gfe|bfe]

use cffg::tmaze::{run_experiment, AgentKind, Position, TmazeSettings};

fn main() {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);
    let kind = match args.next().as_deref() {
        Some("bfe") => AgentKind::Bfe,
        _ => AgentKind::Gfe,
    };
    let settings = TmazeSettings::default();
    let start = std::time::Instant::now();
    let result = match run_experiment(&settings, trials, kind, seed) {
        Ok(r) => r,
        Err((done, e)) => {
            eprintln!("failed after {} trials: {e}", done.len());
            std::process::exit(1);
        }
    };
    println!("trial  moves  observations      win   G(t=1)   G(t=2)   F(learn)");
    for r in &result.records {
        let moves: Vec<&str> = r.actions.iter().map(|p| p.label()).collect();
        let obs: Vec<String> = r.observations.iter().map(|o| o.label()).collect();
        println!(
            "{:>5}  {:<5}  {:<16}  {:<4}  {:>7.3}  {:>7.3}  {:>8.3}",
            r.trial,
            moves.join(","),
            obs.join(","),
            if r.win { "yes" } else { "no" },
            r.min_gfe[0],
            r.min_gfe[1],
            r.min_gfe[2]
        );
    }
    let wins = result.records.iter().filter(|r| r.win).count();
    let cue = result
        .records
        .iter()
        .filter(|r| r.actions[0] == Position::C)
        .count();
    println!(
        "wins {wins}/{trials}, cue first {cue}/{trials}, {:.1?}",
        start.elapsed()
    );
    println!("reinforced statistics A_S - A_0 (rows: outcome@position, columns: position/arm):");
    let diff = result.reinforced();
    for (i, row) in diff.rows().into_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:6.2}")).collect();
        println!("{:>2} {}", i, cells.join(" "));
    }
}

//! Loads a declarative model, runs message passing and prints the marginals,
//! the learned Dirichlet statistics and the free energy per sweep.
//!
//! Usage: cargo run --release --example model_from_toml -- [path.toml]

use cffg::engine::{EngineConfig, InferenceRun};
use cffg::graph::{build_graph, ModelSpec};

fn main() -> cffg::Result<()> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => include_str!("models/umbrella.toml").to_string(),
    };
    let spec = ModelSpec::from_toml_str(&text)?;
    let (graph, constraints) = build_graph(&spec)?;
    let mut run = InferenceRun::new(&graph, &constraints, &[], EngineConfig::default(), 0)?;
    let trace = run.run(10)?;
    for (i, f) in trace.iter().enumerate() {
        println!("sweep {:>2}  F = {f:.6} bits", i + 1);
    }
    for name in ["z1", "z2"] {
        let v = graph.var_id(name).expect("edge in model");
        println!("q({name}) = {}", run.marginals().categorical(v).as_array());
    }
    if let Some(d) = graph
        .var_id("A")
        .and_then(|v| run.marginals().param(v).as_dirichlet())
    {
        println!("q(A) statistics:\n{}", d.alpha());
    }
    Ok(())
}

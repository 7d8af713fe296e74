//! Sum-product on a small chain with known parameters: engine marginals and
//! Bethe free energy next to brute-force enumeration.
//!
//! Usage: cargo run --release --example exact_inference

use cffg::engine::{EngineConfig, InferenceRun};
use cffg::graph::build_graph;
use cffg::graph::spec::{EdgeSpec, FactorSpec, ModelSpec};

const D: [f64; 3] = [0.5, 0.3, 0.2];
const B: [[f64; 3]; 3] = [[0.6, 0.2, 0.1], [0.3, 0.6, 0.2], [0.1, 0.2, 0.7]];
const A: [[f64; 3]; 3] = [[0.8, 0.1, 0.2], [0.1, 0.7, 0.2], [0.1, 0.2, 0.6]];

fn rows(m: &[[f64; 3]; 3]) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.to_vec()).collect()
}

fn model(obs: [usize; 2]) -> ModelSpec {
    let cat = |n: &str| EdgeSpec::Categorical {
        name: n.into(),
        dim: 3,
    };
    let par = |n: &str, cols| EdgeSpec::Parameter {
        name: n.into(),
        rows: 3,
        cols,
    };
    let edges = ["z1", "z1_obs", "z1_next", "z2", "x1", "x2"]
        .map(cat)
        .into_iter();
    let params = [("A1", 3), ("A2", 3), ("c1", 1), ("c2", 1)].map(|(n, c)| par(n, c));
    let point = |name: &str, edge: &str, m: Vec<Vec<f64>>| FactorSpec::PointMass {
        name: name.into(),
        edges: vec![edge.into()],
        index: None,
        matrix: Some(m),
    };
    let flat = vec![vec![1.0 / 3.0]; 3];
    let mut spec = ModelSpec {
        edges: edges.chain(params).collect(),
        factors: vec![
            FactorSpec::CategoricalPrior {
                name: "d".into(),
                edges: vec!["z1".into()],
                p: D.to_vec(),
            },
            FactorSpec::Equality {
                name: "z1_eq".into(),
                edges: vec!["z1".into(), "z1_obs".into(), "z1_next".into()],
            },
            FactorSpec::Transition {
                name: "B".into(),
                edges: vec!["z2".into(), "z1_next".into()],
                matrices: vec![rows(&B)],
            },
            FactorSpec::GoalObservation {
                name: "obs1".into(),
                edges: vec!["x1".into(), "z1_obs".into(), "A1".into(), "c1".into()],
            },
            FactorSpec::GoalObservation {
                name: "obs2".into(),
                edges: vec!["x2".into(), "z2".into(), "A2".into(), "c2".into()],
            },
            point("A1_value", "A1", rows(&A)),
            point("A2_value", "A2", rows(&A)),
            point("c1_value", "c1", flat.clone()),
            point("c2_value", "c2", flat),
        ],
        constraints: Default::default(),
    };
    spec.constraints.clamps.insert("x1".into(), obs[0]);
    spec.constraints.clamps.insert("x2".into(), obs[1]);
    spec
}

fn main() -> cffg::Result<()> {
    let obs = [0, 2];
    let (graph, constraints) = build_graph(&model(obs))?;
    let mut run = InferenceRun::new(&graph, &constraints, &[], EngineConfig::default(), 0)?;
    let f = *run.run(3)?.last().expect("three sweeps");

    // brute force over (z1, z2)
    let mut joint = [[0.0; 3]; 3];
    for (i, row) in joint.iter_mut().enumerate() {
        for (j, p) in row.iter_mut().enumerate() {
            *p = D[i] * A[obs[0]][i] * B[j][i] * A[obs[1]][j];
        }
    }
    let evidence: f64 = joint.iter().flatten().sum();
    let exact_z1: Vec<f64> = joint
        .iter()
        .map(|r| r.iter().sum::<f64>() / evidence)
        .collect();
    let exact_z2: Vec<f64> = (0..3)
        .map(|j| joint.iter().map(|r| r[j]).sum::<f64>() / evidence)
        .collect();
    // the flat goal statistic adds log2(3) per observed slice
    let exact_f = -evidence.log2() + 2.0 * 3f64.log2();

    let q1 = run.marginals().categorical(graph.var_id("z1").expect("z1"));
    let q2 = run.marginals().categorical(graph.var_id("z2").expect("z2"));
    println!("q(z1)  engine {:?}", q1.as_array().to_vec());
    println!("       exact  {exact_z1:?}");
    println!("q(z2)  engine {:?}", q2.as_array().to_vec());
    println!("       exact  {exact_z2:?}");
    println!("F      engine {f:.12} bits, exact {exact_f:.12} bits");
    Ok(())
}

use ndarray::{array, Array1, Array2};

use super::*;
use crate::graph::{GraphBuilder, PointValue};

struct Hmm {
    graph: FactorGraph,
    constraints: ConstraintSet,
    b: Array2<f64>,
    a: Array2<f64>,
    d: Array1<f64>,
    obs: Vec<usize>,
}

/// Three-state chain with clamped observations; `learn_a` puts a Dirichlet on A.
fn hmm(obs: &[usize], learn_a: bool) -> Hmm {
    let d = array![0.6, 0.3, 0.1];
    let b = array![[0.8, 0.1, 0.2], [0.1, 0.7, 0.3], [0.1, 0.2, 0.5]];
    let a = array![[0.7, 0.2, 0.1], [0.2, 0.6, 0.2], [0.1, 0.2, 0.7]];
    let mut g = GraphBuilder::new();
    let a_edge = g.parameter_edge("A", 3, 3);
    let c_edge = g.parameter_edge("c", 3, 1);
    if learn_a {
        g.factor(
            "A_prior",
            FactorKind::DirichletPrior {
                prior: Dirichlet::new(a.mapv(|x| 1.0 + 4.0 * x)).unwrap(),
            },
            &[a_edge],
        );
    } else {
        g.factor(
            "A_value",
            FactorKind::PointMass {
                value: PointValue::Matrix(a.clone()),
            },
            &[a_edge],
        );
    }
    g.factor(
        "c_value",
        FactorKind::PointMass {
            value: PointValue::Matrix(Array2::from_elem((3, 1), 1.0 / 3.0)),
        },
        &[c_edge],
    );
    let mut constraints = ConstraintSet::new();
    let mut prev = None;
    let mut x_edges = Vec::new();
    let mut z_edges = Vec::new();
    let n = obs.len();
    for t in 0..n {
        let z = g.categorical_edge(&format!("z{t}"), 3);
        match prev {
            None => {
                g.factor(
                    "d",
                    FactorKind::CategoricalPrior {
                        p: ProbVector::new(d.clone()).unwrap(),
                    },
                    &[z],
                );
            }
            Some(p) => {
                g.factor(
                    &format!("B{t}"),
                    FactorKind::Transition {
                        matrices: vec![TransitionMatrix::new(b.clone()).unwrap()],
                    },
                    &[z, p],
                );
            }
        }
        let z_obs = g.categorical_edge(&format!("z{t}_obs"), 3);
        let mut tied = vec![z, z_obs];
        if t + 1 < n {
            let z_next = g.categorical_edge(&format!("z{t}_next"), 3);
            tied.push(z_next);
            prev = Some(z_next);
        }
        g.factor(&format!("z{t}_eq"), FactorKind::Equality, &tied);
        x_edges.push(g.categorical_edge(&format!("x{t}"), 3));
        z_edges.push(z_obs);
    }
    // observation nodes share A and c through equality nodes
    let mut a_copies = Vec::new();
    let mut c_copies = Vec::new();
    for t in 0..obs.len() {
        let ac = g.parameter_edge(&format!("A_{t}"), 3, 3);
        let cc = g.parameter_edge(&format!("c_{t}"), 3, 1);
        g.factor(
            &format!("obs{t}"),
            FactorKind::GoalObservation,
            &[x_edges[t], z_edges[t], ac, cc],
        );
        a_copies.push(ac);
        c_copies.push(cc);
        constraints = constraints.with_clamp(x_edges[t], OneHot::new(obs[t], 3).unwrap());
    }
    let mut all_a = vec![a_edge];
    all_a.extend(a_copies);
    let mut all_c = vec![c_edge];
    all_c.extend(c_copies);
    g.factor("A_eq", FactorKind::Equality, &all_a);
    g.factor("c_eq", FactorKind::Equality, &all_c);
    Hmm {
        graph: g.build().unwrap(),
        constraints,
        b,
        a,
        d,
        obs: obs.to_vec(),
    }
}

/// Joint p(z_0..z_T, x̂) by brute force.
fn enumerate(h: &Hmm) -> (f64, Vec<Array1<f64>>) {
    let t = h.obs.len();
    let total = 3usize.pow(t as u32);
    let mut evidence = 0.0;
    let mut marg = vec![Array1::zeros(3); t];
    for code in 0..total {
        let zs: Vec<usize> = (0..t).map(|k| (code / 3usize.pow(k as u32)) % 3).collect();
        let mut p = h.d[zs[0]];
        for k in 1..t {
            p *= h.b[[zs[k], zs[k - 1]]];
        }
        for (&x, &z) in h.obs.iter().zip(&zs) {
            p *= h.a[[x, z]];
        }
        evidence += p;
        for k in 0..t {
            marg[k][zs[k]] += p;
        }
    }
    for m in &mut marg {
        *m /= evidence;
    }
    (evidence, marg)
}

#[test]
fn clamped_chain_recovers_exact_posterior_and_evidence() {
    let h = hmm(&[0, 2, 2, 1], false);
    let mut run =
        InferenceRun::new(&h.graph, &h.constraints, &[], EngineConfig::default(), 1).unwrap();
    let trace = run.run(3).unwrap();
    let (evidence, marg) = enumerate(&h);
    for (k, m) in marg.iter().enumerate() {
        let q = run
            .marginals()
            .categorical(h.graph.var_id(&format!("z{k}")).unwrap());
        for (a, b) in q.as_array().iter().zip(m) {
            assert!((a - b).abs() < 1e-12, "z{k}: {a} vs {b}");
        }
    }
    // F = −ln p(x̂) − Σ ln c[x̂], with c uniform
    let expected = -evidence.ln() + 4.0 * 3f64.ln();
    let f = run.free_energy().unwrap().total;
    assert!((f - expected).abs() < 1e-10, "{f} vs {expected}");
    assert!((trace[2] - nats_to_bits(expected)).abs() < 1e-10);
}

#[test]
fn learning_decreases_free_energy_monotonically() {
    let h = hmm(&[0, 0, 1, 2, 2, 1, 0], true);
    let mut run =
        InferenceRun::new(&h.graph, &h.constraints, &[], EngineConfig::default(), 1).unwrap();
    let trace = run.run(25).unwrap();
    for w in trace.windows(2) {
        assert!(
            w[1] <= w[0] + 1e-9,
            "free energy rose: {} -> {}",
            w[0],
            w[1]
        );
    }
}

#[test]
fn learning_adds_one_count_per_clamped_observation() {
    let h = hmm(&[0, 1, 2, 1, 0], true);
    let out = learn(&h.graph, &h.constraints, &[], &EngineConfig::default(), 3).unwrap();
    let a = h.graph.var_id("A").unwrap();
    let post = out.marginals.param(a).as_dirichlet().unwrap().total_mass();
    let prior = h.a.mapv(|x| 1.0 + 4.0 * x).sum();
    assert!((post - prior - 5.0).abs() < 1e-10);
}

#[test]
fn runs_are_reproducible_from_the_seed() {
    // substituted node with a learned A exercises the sampler
    let h = hmm(&[0, 1, 2], true);
    let node = h.graph.node_id("obs2").unwrap();
    let mut c = ConstraintSet::new();
    for t in 0..2 {
        c = c.with_clamp(
            h.graph.edge_id(&format!("x{t}")).unwrap(),
            OneHot::new(h.obs[t], 3).unwrap(),
        );
    }
    c = c.with_substitution(node);
    let trace = |seed| {
        let mut run = InferenceRun::new(&h.graph, &c, &[], EngineConfig::default(), seed).unwrap();
        run.run(8).unwrap()
    };
    assert_eq!(trace(5), trace(5));
    assert_ne!(trace(5), trace(6));
}

#[test]
fn transition_messages_match_matrix_products() {
    let b = TransitionMatrix::new(array![[0.9, 0.2], [0.1, 0.8]]).unwrap();
    let (f, bk) = transition_messages(&b, &array![1.0, 0.0], &array![0.0, 1.0]).unwrap();
    assert!((f.get(0) - 0.9).abs() < 1e-15);
    assert!((bk.get(0) - 0.1 / 0.9).abs() < 1e-15);
}

#[test]
fn conjugate_update_adds_outer_product() {
    let prior = Dirichlet::new(Array2::ones((2, 3))).unwrap();
    let z = ProbVector::new(array![0.5, 0.25, 0.25]).unwrap();
    let post = dirichlet_categorical_updates(&prior, &OneHot::new(1, 2).unwrap(), &z).unwrap();
    assert_eq!(post.alpha(), &array![[1.0, 1.0, 1.0], [1.5, 1.25, 1.25]]);
}

#[test]
fn config_rejects_burn_in_past_the_sweeps() {
    let cfg = EngineConfig {
        sweeps: 5,
        burn_in: 5,
        ..EngineConfig::default()
    };
    assert!(cfg.validate().is_err());
}

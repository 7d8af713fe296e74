use ndarray::Array2;

use crate::dist::{ProbVector, TransitionMatrix};
use crate::error::{Error, Result};
use crate::graph::spec::{matrix_to_rows, EdgeSpec, FactorSpec, ModelSpec};

/// Belief carried into a trial about a parameter (A or one goal vector c_k).
#[derive(Clone, Debug, PartialEq)]
pub enum ParamPrior {
    /// Dirichlet statistics, learned across trials.
    Dirichlet(Array2<f64>),
    /// Known value.
    PointMass(Array2<f64>),
}

impl ParamPrior {
    pub fn statistics(&self) -> &Array2<f64> {
        match self {
            ParamPrior::Dirichlet(a) | ParamPrior::PointMass(a) => a,
        }
    }

    fn factor(&self, name: &str, edge: &str) -> FactorSpec {
        match self {
            ParamPrior::Dirichlet(a) => FactorSpec::DirichletPrior {
                name: name.into(),
                edges: vec![edge.into()],
                alpha: matrix_to_rows(a),
            },
            ParamPrior::PointMass(a) => FactorSpec::PointMass {
                name: name.into(),
                edges: vec![edge.into()],
                index: None,
                matrix: Some(matrix_to_rows(a)),
            },
        }
    }
}

/// Ingredients of a goal-constrained state-space agent model over `horizon`
/// moves: initial state d, controlled transitions B_u, observation matrix A
/// shared across time, one goal statistic c_k per time.
#[derive(Clone, Debug)]
pub struct ModelParts {
    pub d: ProbVector,
    pub b: Vec<TransitionMatrix>,
    pub a: ParamPrior,
    pub goals: Vec<ParamPrior>,
}

impl ModelParts {
    pub fn horizon(&self) -> usize {
        self.goals.len()
    }

    pub fn states(&self) -> usize {
        self.d.len()
    }

    pub fn outcomes(&self) -> usize {
        self.a.statistics().nrows()
    }
}

fn categorical(name: String, dim: usize) -> EdgeSpec {
    EdgeSpec::Categorical { name, dim }
}

fn parameter(name: String, rows: usize, cols: usize) -> EdgeSpec {
    EdgeSpec::Parameter { name, rows, cols }
}

/// Model description with edges `z0..zT`, `x1..xT`, `A`, `c1..cT` and nodes
/// `d`, `B1..BT`, `obs1..obsT`. Constraints are left empty; the
/// perception-action cycle sets them per time step.
pub fn build_agent_model(parts: &ModelParts) -> Result<ModelSpec> {
    let n = parts.states();
    let m = parts.outcomes();
    let horizon = parts.horizon();
    if horizon == 0 {
        return Err(Error::Model(
            "agent model needs at least one goal statistic".into(),
        ));
    }
    if parts.a.statistics().ncols() != n {
        return Err(crate::error::shape_err(
            "observation matrix columns",
            n,
            parts.a.statistics().ncols(),
        ));
    }
    for g in &parts.goals {
        if g.statistics().dim() != (m, 1) {
            return Err(crate::error::shape_err(
                "goal statistic",
                format!("({m}, 1)"),
                format!("{:?}", g.statistics().dim()),
            ));
        }
    }

    let mut edges = vec![categorical("z0".into(), n), parameter("A".into(), m, n)];
    let mut factors = vec![
        FactorSpec::CategoricalPrior {
            name: "d".into(),
            edges: vec!["z0".into()],
            p: parts.d.as_array().to_vec(),
        },
        parts.a.factor("A_prior", "A"),
    ];
    let matrices: Vec<Vec<Vec<f64>>> = parts
        .b
        .iter()
        .map(|b| matrix_to_rows(b.as_array()))
        .collect();
    let mut a_copies = vec!["A".to_string()];
    let mut prev = "z0".to_string();
    for k in 1..=horizon {
        let z = format!("z{k}");
        edges.push(categorical(z.clone(), n));
        factors.push(FactorSpec::Transition {
            name: format!("B{k}"),
            edges: vec![z.clone(), prev.clone()],
            matrices: matrices.clone(),
        });
        // a state inside the horizon feeds both its observation and the next move
        let z_obs = if k < horizon {
            let z_obs = format!("z{k}_obs");
            let z_next = format!("z{k}_next");
            edges.push(categorical(z_obs.clone(), n));
            edges.push(categorical(z_next.clone(), n));
            factors.push(FactorSpec::Equality {
                name: format!("z{k}_eq"),
                edges: vec![z.clone(), z_obs.clone(), z_next.clone()],
            });
            prev = z_next;
            z_obs
        } else {
            z
        };
        let x = format!("x{k}");
        let a_k = format!("A{k}");
        let c_k = format!("c{k}");
        edges.push(categorical(x.clone(), m));
        edges.push(parameter(a_k.clone(), m, n));
        edges.push(parameter(c_k.clone(), m, 1));
        factors.push(FactorSpec::GoalObservation {
            name: format!("obs{k}"),
            edges: vec![x, z_obs, a_k.clone(), c_k.clone()],
        });
        factors.push(parts.goals[k - 1].factor(&format!("c{k}_prior"), &c_k));
        a_copies.push(a_k);
    }
    factors.push(FactorSpec::Equality {
        name: "A_eq".into(),
        edges: a_copies,
    });
    Ok(ModelSpec {
        edges,
        factors,
        constraints: Default::default(),
    })
}

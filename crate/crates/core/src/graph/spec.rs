//! Declarative model descriptions (TOML or JSON).
//!
//! ```toml
//! [[edges]]
//! name = "z0"
//! kind = "categorical"
//! dim = 2
//!
//! [[edges]]
//! name = "A"
//! kind = "parameter"
//! rows = 2
//! cols = 2
//!
//! [[factors]]
//! name = "prior"
//! kind = "categorical_prior"
//! edges = ["z0"]
//! p = [0.5, 0.5]
//!
//! [[factors]]
//! name = "a_prior"
//! kind = "dirichlet_prior"
//! edges = ["A"]
//! alpha = [[1.0, 1.0], [1.0, 1.0]]   # row-major
//!
//! [constraints]
//! clamps = { x1 = 0 }
//! substitutions = ["obs1"]
//! ```
//!
//! Factor kinds and their edge order:
//!
//! | kind                | edges            | parameters                                    |
//! |---------------------|------------------|-----------------------------------------------|
//! | `categorical_prior` | `[z]`            | `p`: probability vector                       |
//! | `dirichlet_prior`   | `[A]`            | `alpha`: row-major matrix (one column for c)  |
//! | `transition`        | `[out, in]`      | `matrices`: list of row-major column-stochastic matrices; more than one makes the node controlled |
//! | `goal_observation`  | `[x, z, A, c]`   | none                                          |
//! | `equality`          | two or more      | none                                          |
//! | `point_mass`        | `[v]`            | `index` for a categorical edge, or `matrix`   |

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ConstraintSet, EdgeKind, FactorGraph, FactorKind, GraphBuilder, PointValue};
use crate::dist::{Dirichlet, OneHot, ProbVector, TransitionMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub factors: Vec<FactorSpec>,
    #[serde(default)]
    pub constraints: ConstraintSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EdgeSpec {
    Categorical {
        name: String,
        dim: usize,
    },
    Parameter {
        name: String,
        rows: usize,
        cols: usize,
    },
}

impl EdgeSpec {
    pub fn name(&self) -> &str {
        match self {
            EdgeSpec::Categorical { name, .. } | EdgeSpec::Parameter { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorSpec {
    CategoricalPrior {
        name: String,
        edges: Vec<String>,
        p: Vec<f64>,
    },
    DirichletPrior {
        name: String,
        edges: Vec<String>,
        alpha: Vec<Vec<f64>>,
    },
    Transition {
        name: String,
        edges: Vec<String>,
        matrices: Vec<Vec<Vec<f64>>>,
    },
    GoalObservation {
        name: String,
        edges: Vec<String>,
    },
    Equality {
        name: String,
        edges: Vec<String>,
    },
    PointMass {
        name: String,
        edges: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<Vec<f64>>>,
    },
}

impl FactorSpec {
    pub fn name(&self) -> &str {
        match self {
            FactorSpec::CategoricalPrior { name, .. }
            | FactorSpec::DirichletPrior { name, .. }
            | FactorSpec::Transition { name, .. }
            | FactorSpec::GoalObservation { name, .. }
            | FactorSpec::Equality { name, .. }
            | FactorSpec::PointMass { name, .. } => name,
        }
    }

    pub fn edges(&self) -> &[String] {
        match self {
            FactorSpec::CategoricalPrior { edges, .. }
            | FactorSpec::DirichletPrior { edges, .. }
            | FactorSpec::Transition { edges, .. }
            | FactorSpec::GoalObservation { edges, .. }
            | FactorSpec::Equality { edges, .. }
            | FactorSpec::PointMass { edges, .. } => edges,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    /// Observed index per categorical edge.
    #[serde(default)]
    pub clamps: BTreeMap<String, usize>,
    /// Goal-observation factors under p-substitution.
    #[serde(default)]
    pub substitutions: Vec<String>,
}

impl ModelSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Model(format!("model spec: {e}")))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Model(format!("model spec: {e}")))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Model(format!("model spec: {e}")))
    }
}

/// Row-major nested vectors to a matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>], context: &str) -> Result<Array2<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Model(format!("{context}: ragged or empty matrix")));
    }
    Ok(Array2::from_shape_fn((r, c), |(i, j)| rows[i][j]))
}

pub fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Validates `spec` and builds the graph together with its constraints.
pub fn build_graph(spec: &ModelSpec) -> Result<(FactorGraph, ConstraintSet)> {
    let mut b = GraphBuilder::new();
    let mut edge_ids = BTreeMap::new();
    for e in &spec.edges {
        let kind = match *e {
            EdgeSpec::Categorical { dim, .. } => {
                if dim == 0 {
                    return Err(Error::Model(format!(
                        "edge '{}' has an empty alphabet",
                        e.name()
                    )));
                }
                EdgeKind::Categorical { dim }
            }
            EdgeSpec::Parameter { rows, cols, .. } => {
                if rows == 0 || cols == 0 {
                    return Err(Error::Model(format!(
                        "edge '{}' has an empty shape",
                        e.name()
                    )));
                }
                EdgeKind::Parameter { rows, cols }
            }
        };
        edge_ids.insert(e.name().to_string(), b.edge(e.name(), kind));
    }
    let mut edge_kinds = BTreeMap::new();
    for e in &spec.edges {
        edge_kinds.insert(e.name().to_string(), e.clone());
    }

    for f in &spec.factors {
        let ctx = format!("factor '{}'", f.name());
        let edges = f
            .edges()
            .iter()
            .map(|n| {
                edge_ids
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::Model(format!("{ctx} references unknown edge '{n}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let kind = match f {
            FactorSpec::CategoricalPrior { p, .. } => FactorKind::CategoricalPrior {
                p: ProbVector::new(p.iter().copied().collect())?,
            },
            FactorSpec::DirichletPrior { alpha, .. } => FactorKind::DirichletPrior {
                prior: Dirichlet::new(matrix_from_rows(alpha, &ctx)?)?,
            },
            FactorSpec::Transition { matrices, .. } => FactorKind::Transition {
                matrices: matrices
                    .iter()
                    .map(|m| TransitionMatrix::new(matrix_from_rows(m, &ctx)?))
                    .collect::<Result<_>>()?,
            },
            FactorSpec::GoalObservation { .. } => FactorKind::GoalObservation,
            FactorSpec::Equality { .. } => FactorKind::Equality,
            FactorSpec::PointMass {
                index,
                matrix,
                edges,
                ..
            } => {
                let value = match (index, matrix) {
                    (Some(i), None) => {
                        let dim = match edges.first().and_then(|n| edge_kinds.get(n)) {
                            Some(EdgeSpec::Categorical { dim, .. }) => *dim,
                            _ => {
                                return Err(Error::Model(format!(
                                    "{ctx}: index needs a categorical edge"
                                )))
                            }
                        };
                        PointValue::OneHot(OneHot::new(*i, dim)?)
                    }
                    (None, Some(m)) => PointValue::Matrix(matrix_from_rows(m, &ctx)?),
                    _ => {
                        return Err(Error::Model(format!(
                            "{ctx}: give exactly one of index or matrix"
                        )))
                    }
                };
                FactorKind::PointMass { value }
            }
        };
        b.factor(f.name(), kind, &edges);
    }
    let graph = b.build()?;

    let mut constraints = ConstraintSet::new();
    for (name, &index) in &spec.constraints.clamps {
        let e = graph
            .edge_id(name)
            .ok_or_else(|| Error::Constraint(format!("clamp on unknown edge '{name}'")))?;
        let EdgeKind::Categorical { dim } = graph.edge(e).kind else {
            return Err(Error::Constraint(format!(
                "clamp on parameter edge '{name}'"
            )));
        };
        constraints = constraints.with_clamp(
            e,
            OneHot::new(index, dim).map_err(|e| Error::Constraint(e.to_string()))?,
        );
    }
    for name in &spec.constraints.substitutions {
        let n = graph
            .node_id(name)
            .ok_or_else(|| Error::Constraint(format!("substitution on unknown factor '{name}'")))?;
        constraints = constraints.with_substitution(n);
    }
    constraints.validate(&graph)?;
    Ok((graph, constraints))
}

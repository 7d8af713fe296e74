//! Constrained Forney-style factor graphs.
//!
//! Edges are variables and connect at most two factor nodes. Equality nodes
//! join several edges into one variable; after construction the graph keeps a
//! derived table of [`Variable`]s (equality-connected edge clusters) that the
//! engine and the free-energy bookkeeping operate on.

pub mod constraints;
pub mod free_energy;
pub mod marginals;
pub mod schedule;
pub mod spec;

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dist::{Dirichlet, OneHot, ProbVector, TransitionMatrix, NORM_TOL};
use crate::error::{Error, Result};

pub use constraints::{apply_time_dependent_constraints, ConstraintSet};
pub use free_energy::{bethe_free_energy, nats_to_bits, FreeEnergyBreakdown};
pub use marginals::{Marginals, ParamBelief, VarBelief};
pub use schedule::{Direction, Schedule, ScheduleStep, StateMessageRule, UpdateRule};
pub use spec::{build_graph, ModelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// Index of an equality-merged variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Discrete variable in one-hot encoding.
    Categorical { dim: usize },
    /// Column-stochastic matrix (or probability vector when `cols == 1`).
    Parameter { rows: usize, cols: usize },
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub name: String,
    pub kind: EdgeKind,
    nodes: Vec<NodeId>,
}

impl Edge {
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }
}

/// Fixed value carried by a point-mass node.
#[derive(Clone, Debug, PartialEq)]
pub enum PointValue {
    OneHot(OneHot),
    Matrix(Array2<f64>),
}

#[derive(Clone, Debug)]
pub enum FactorKind {
    /// Cat(z | p) on one categorical edge.
    CategoricalPrior { p: ProbVector },
    /// Dir(A | α) on one parameter edge.
    DirichletPrior { prior: Dirichlet },
    /// Cat(out | B_u in) on edges `[out, in]`; several matrices make the node controlled.
    Transition { matrices: Vec<TransitionMatrix> },
    /// Observation model Cat(x | A z) facing a goal prior Cat(x | c), on edges `[x, z, A, c]`.
    GoalObservation,
    /// δ-constraint tying all attached edges to one variable.
    Equality,
    /// Fixes the attached edge to a value.
    PointMass { value: PointValue },
}

impl FactorKind {
    pub fn label(&self) -> &'static str {
        match self {
            FactorKind::CategoricalPrior { .. } => "categorical_prior",
            FactorKind::DirichletPrior { .. } => "dirichlet_prior",
            FactorKind::Transition { .. } => "transition",
            FactorKind::GoalObservation => "goal_observation",
            FactorKind::Equality => "equality",
            FactorKind::PointMass { .. } => "point_mass",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FactorNode {
    pub name: String,
    pub kind: FactorKind,
    pub edges: Vec<EdgeId>,
}

/// Slots of a goal-observation node.
pub mod slot {
    pub const X: usize = 0;
    pub const Z: usize = 1;
    pub const A: usize = 2;
    pub const C: usize = 3;
    pub const OUT: usize = 0;
    pub const IN: usize = 1;
}

/// A variable: one or more edges tied together by equality nodes.
#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub kind: EdgeKind,
    pub edges: Vec<EdgeId>,
    /// Non-equality factors attached to any edge of the variable, with the slot index.
    pub factors: Vec<(NodeId, usize)>,
}

impl Variable {
    pub fn degree(&self) -> usize {
        self.factors.len()
    }
}

#[derive(Clone, Debug)]
pub struct FactorGraph {
    nodes: Vec<FactorNode>,
    edges: Vec<Edge>,
    variables: Vec<Variable>,
    edge_var: Vec<VarId>,
    node_index: BTreeMap<String, NodeId>,
    edge_index: BTreeMap<String, EdgeId>,
}

impl FactorGraph {
    pub fn nodes(&self) -> &[FactorNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> &FactorNode {
        &self.nodes[id.0]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn var_of(&self, edge: EdgeId) -> VarId {
        self.edge_var[edge.0]
    }

    /// Variable attached to `slot` of `node`.
    pub fn slot_var(&self, node: NodeId, slot: usize) -> VarId {
        self.var_of(self.nodes[node.0].edges[slot])
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.node_index.get(name).copied()
    }

    pub fn edge_id(&self, name: &str) -> Option<EdgeId> {
        self.edge_index.get(name).copied()
    }

    pub fn var_id(&self, edge_name: &str) -> Option<VarId> {
        self.edge_id(edge_name).map(|e| self.var_of(e))
    }

    /// Transition nodes with more than one matrix, in declaration order.
    pub fn controlled_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(&n.kind, FactorKind::Transition { matrices } if matrices.len() > 1))
            .map(|(i, _)| NodeId(i))
            .collect()
    }

    /// Goal-observation nodes in declaration order (the time slices of a model).
    pub fn goal_observation_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.kind, FactorKind::GoalObservation))
            .map(|(i, _)| NodeId(i))
            .collect()
    }

    /// Point-mass value fixing a variable, if any node does.
    pub fn point_mass_of(&self, var: VarId) -> Option<&PointValue> {
        self.variables[var.0]
            .factors
            .iter()
            .find_map(|&(n, _)| match &self.nodes[n.0].kind {
                FactorKind::PointMass { value } => Some(value),
                _ => None,
            })
    }

    pub fn num_states(&self) -> f64 {
        self.variables
            .iter()
            .filter_map(|v| match v.kind {
                EdgeKind::Categorical { dim } => Some(dim as f64),
                _ => None,
            })
            .product()
    }
}

/// Incremental construction of a [`FactorGraph`].
#[derive(Default)]
pub struct GraphBuilder {
    nodes: Vec<FactorNode>,
    edges: Vec<Edge>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn categorical_edge(&mut self, name: &str, dim: usize) -> EdgeId {
        self.edge(name, EdgeKind::Categorical { dim })
    }

    pub fn parameter_edge(&mut self, name: &str, rows: usize, cols: usize) -> EdgeId {
        self.edge(name, EdgeKind::Parameter { rows, cols })
    }

    pub fn edge(&mut self, name: &str, kind: EdgeKind) -> EdgeId {
        self.edges.push(Edge {
            name: name.to_string(),
            kind,
            nodes: Vec::new(),
        });
        EdgeId(self.edges.len() - 1)
    }

    pub fn factor(&mut self, name: &str, kind: FactorKind, edges: &[EdgeId]) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(FactorNode {
            name: name.to_string(),
            kind,
            edges: edges.to_vec(),
        });
        id
    }

    /// Validates arities and shapes, then derives the variable table.
    pub fn build(mut self) -> Result<FactorGraph> {
        let mut node_index = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if node_index.insert(n.name.clone(), NodeId(i)).is_some() {
                return Err(Error::Model(format!("duplicate node name '{}'", n.name)));
            }
        }
        let mut edge_index = BTreeMap::new();
        for (i, e) in self.edges.iter().enumerate() {
            if edge_index.insert(e.name.clone(), EdgeId(i)).is_some() {
                return Err(Error::Model(format!("duplicate edge name '{}'", e.name)));
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for &e in &n.edges {
                if e.0 >= self.edges.len() {
                    return Err(Error::Model(format!(
                        "node '{}' references unknown edge",
                        n.name
                    )));
                }
                self.edges[e.0].nodes.push(NodeId(i));
            }
        }
        for e in &self.edges {
            match e.nodes.len() {
                0 => return Err(Error::Model(format!("dangling edge '{}'", e.name))),
                1 | 2 => {}
                k => {
                    return Err(Error::Model(format!(
                        "edge '{}' connects {k} nodes; use an equality node",
                        e.name
                    )))
                }
            }
            if e.nodes.len() == 2 && e.nodes[0] == e.nodes[1] {
                return Err(Error::Model(format!("edge '{}' is a self-loop", e.name)));
            }
        }
        for n in &self.nodes {
            check_node(n, &self.edges)?;
        }

        let (variables, edge_var) = merge_equalities(&self.nodes, &self.edges);
        Ok(FactorGraph {
            nodes: self.nodes,
            edges: self.edges,
            variables,
            edge_var,
            node_index,
            edge_index,
        })
    }
}

fn check_node(n: &FactorNode, edges: &[Edge]) -> Result<()> {
    let kinds: Vec<EdgeKind> = n.edges.iter().map(|e| edges[e.0].kind).collect();
    let bad = |msg: String| {
        Err(Error::Model(format!(
            "node '{}' ({}): {msg}",
            n.name,
            n.kind.label()
        )))
    };
    let arity = |k: usize| -> Result<()> {
        if kinds.len() != k {
            return Err(Error::Model(format!(
                "node '{}' ({}) expects {k} edges, got {}",
                n.name,
                n.kind.label(),
                kinds.len()
            )));
        }
        Ok(())
    };
    match &n.kind {
        FactorKind::CategoricalPrior { p } => {
            arity(1)?;
            if kinds[0] != (EdgeKind::Categorical { dim: p.len() }) {
                return bad(format!(
                    "edge kind {:?} does not match prior of length {}",
                    kinds[0],
                    p.len()
                ));
            }
        }
        FactorKind::DirichletPrior { prior } => {
            arity(1)?;
            let want = EdgeKind::Parameter {
                rows: prior.rows(),
                cols: prior.cols(),
            };
            if kinds[0] != want {
                return bad(format!(
                    "edge kind {:?} does not match prior {want:?}",
                    kinds[0]
                ));
            }
        }
        FactorKind::Transition { matrices } => {
            arity(2)?;
            let Some(first) = matrices.first() else {
                return bad("no transition matrices".into());
            };
            if matrices
                .iter()
                .any(|m| m.as_array().dim() != first.as_array().dim())
            {
                return bad("transition matrices differ in shape".into());
            }
            if kinds[slot::OUT] != (EdgeKind::Categorical { dim: first.rows() })
                || kinds[slot::IN] != (EdgeKind::Categorical { dim: first.cols() })
            {
                return bad(format!(
                    "edges {:?} do not match a {}x{} matrix",
                    kinds,
                    first.rows(),
                    first.cols()
                ));
            }
        }
        FactorKind::GoalObservation => {
            arity(4)?;
            let (EdgeKind::Categorical { dim: nx }, EdgeKind::Categorical { dim: nz }) =
                (kinds[slot::X], kinds[slot::Z])
            else {
                return bad("x and z must be categorical".into());
            };
            if kinds[slot::A] != (EdgeKind::Parameter { rows: nx, cols: nz }) {
                return bad(format!("A edge must be a {nx}x{nz} parameter"));
            }
            if kinds[slot::C] != (EdgeKind::Parameter { rows: nx, cols: 1 }) {
                return bad(format!("c edge must be a {nx}x1 parameter"));
            }
            if edges[n.edges[slot::X].0].nodes.len() != 1 {
                return bad("the observation edge x is internal to the composite node".into());
            }
        }
        FactorKind::Equality => {
            if kinds.len() < 2 {
                return bad("equality node needs at least two edges".into());
            }
            if kinds.iter().any(|k| *k != kinds[0]) {
                return bad("equality node joins edges of different kinds".into());
            }
        }
        FactorKind::PointMass { value } => {
            arity(1)?;
            match (value, kinds[0]) {
                (PointValue::OneHot(h), EdgeKind::Categorical { dim }) if h.dim() == dim => {}
                (PointValue::Matrix(m), EdgeKind::Parameter { rows, cols })
                    if m.dim() == (rows, cols) =>
                {
                    for (j, c) in m.columns().into_iter().enumerate() {
                        if c.iter().any(|&x| x < 0.0) || (c.sum() - 1.0).abs() > NORM_TOL {
                            return bad(format!(
                                "column {j} of point mass is not a probability vector"
                            ));
                        }
                    }
                }
                _ => return bad("point-mass value does not match edge kind".into()),
            }
        }
    }
    Ok(())
}

fn merge_equalities(nodes: &[FactorNode], edges: &[Edge]) -> (Vec<Variable>, Vec<VarId>) {
    // union-find over edges joined by equality nodes
    let mut parent: Vec<usize> = (0..edges.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for n in nodes {
        if matches!(n.kind, FactorKind::Equality) {
            let r = find(&mut parent, n.edges[0].0);
            for e in &n.edges[1..] {
                let s = find(&mut parent, e.0);
                parent[s] = r;
            }
        }
    }
    let mut root_var: BTreeMap<usize, VarId> = BTreeMap::new();
    let mut variables: Vec<Variable> = Vec::new();
    let mut edge_var = vec![VarId(0); edges.len()];
    for (i, e) in edges.iter().enumerate() {
        let r = find(&mut parent, i);
        let v = *root_var.entry(r).or_insert_with(|| {
            variables.push(Variable {
                name: e.name.clone(),
                kind: e.kind,
                edges: Vec::new(),
                factors: Vec::new(),
            });
            VarId(variables.len() - 1)
        });
        variables[v.0].edges.push(EdgeId(i));
        edge_var[i] = v;
    }
    for (ni, n) in nodes.iter().enumerate() {
        if matches!(n.kind, FactorKind::Equality) {
            continue;
        }
        for (s, e) in n.edges.iter().enumerate() {
            variables[edge_var[e.0].0].factors.push((NodeId(ni), s));
        }
    }
    (variables, edge_var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_prior_graph() {
        let mut b = GraphBuilder::new();
        let z = b.categorical_edge("z", 2);
        b.factor(
            "p",
            FactorKind::CategoricalPrior {
                p: ProbVector::uniform(2),
            },
            &[z],
        );
        let g = b.build().unwrap();
        assert_eq!(g.nodes().len(), 1);
        assert_eq!(g.variables().len(), 1);
        assert_eq!(g.variables()[0].degree(), 1);
    }

    #[test]
    fn rejects_dangling_edge() {
        let mut b = GraphBuilder::new();
        b.categorical_edge("z", 2);
        assert!(matches!(b.build(), Err(Error::Model(m)) if m.contains("dangling")));
    }

    #[test]
    fn rejects_arity_mismatch() {
        let mut b = GraphBuilder::new();
        let z = b.categorical_edge("z", 2);
        let w = b.categorical_edge("w", 2);
        b.factor(
            "p",
            FactorKind::CategoricalPrior {
                p: ProbVector::uniform(2),
            },
            &[z, w],
        );
        assert!(b.build().is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut b = GraphBuilder::new();
        let z = b.categorical_edge("z", 3);
        b.factor(
            "p",
            FactorKind::CategoricalPrior {
                p: ProbVector::uniform(2),
            },
            &[z],
        );
        assert!(b.build().is_err());
    }

    #[test]
    fn rejects_triple_edge() {
        let mut b = GraphBuilder::new();
        let z = b.categorical_edge("z", 2);
        for name in ["a", "b", "c"] {
            b.factor(
                name,
                FactorKind::CategoricalPrior {
                    p: ProbVector::uniform(2),
                },
                &[z],
            );
        }
        assert!(b.build().is_err());
    }

    #[test]
    fn equality_merges_edges_into_one_variable() {
        let mut b = GraphBuilder::new();
        let e0 = b.categorical_edge("z", 2);
        let e1 = b.categorical_edge("z_a", 2);
        let e2 = b.categorical_edge("z_b", 2);
        b.factor("eq", FactorKind::Equality, &[e0, e1, e2]);
        b.factor(
            "p",
            FactorKind::CategoricalPrior {
                p: ProbVector::uniform(2),
            },
            &[e0],
        );
        let t = TransitionMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let w = b.categorical_edge("w", 2);
        b.factor("t", FactorKind::Transition { matrices: vec![t] }, &[w, e1]);
        b.factor(
            "q",
            FactorKind::CategoricalPrior {
                p: ProbVector::uniform(2),
            },
            &[e2],
        );
        let g = b.build().unwrap();
        assert_eq!(g.variables().len(), 2);
        let v = g.var_of(e0);
        assert_eq!(g.var_of(e1), v);
        assert_eq!(g.var_of(e2), v);
        assert_eq!(g.variable(v).degree(), 3);
    }
}

//! Constraint annotations: factorisations (beads and bridges), p-substitutions
//! and data clamps.

use std::collections::{BTreeMap, BTreeSet};

use super::{slot, EdgeId, EdgeKind, FactorGraph, FactorKind, NodeId};
use crate::dist::OneHot;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet {
    /// Per-node partition of the adjacent edges. Nodes without an entry use
    /// their kind's default (see [`default_factorisation`]).
    pub factorisation: BTreeMap<NodeId, Vec<Vec<EdgeId>>>,
    /// Goal-observation nodes whose observation model replaces q(x) in the
    /// expectation terms.
    pub p_substitutions: BTreeSet<NodeId>,
    /// Observed values on categorical edges.
    pub data_clamps: BTreeMap<EdgeId, OneHot>,
}

/// Bridged (joint) blocks for transitions and unsubstituted observation pairs,
/// single-edge beads everywhere else.
pub fn default_factorisation(graph: &FactorGraph, node: NodeId) -> Vec<Vec<EdgeId>> {
    let n = graph.node(node);
    match n.kind {
        FactorKind::Transition { .. } => vec![n.edges.clone()],
        FactorKind::GoalObservation => vec![
            vec![n.edges[slot::X], n.edges[slot::Z]],
            vec![n.edges[slot::A]],
            vec![n.edges[slot::C]],
        ],
        _ => n.edges.iter().map(|&e| vec![e]).collect(),
    }
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_clamp(mut self, edge: EdgeId, value: OneHot) -> Self {
        self.data_clamps.insert(edge, value);
        self
    }

    pub fn with_substitution(mut self, node: NodeId) -> Self {
        self.p_substitutions.insert(node);
        self
    }

    /// Replaces every square bead by a plain bead: the BFE objective.
    pub fn without_substitutions(&self) -> Self {
        Self {
            p_substitutions: BTreeSet::new(),
            ..self.clone()
        }
    }

    pub fn is_substituted(&self, node: NodeId) -> bool {
        self.p_substitutions.contains(&node)
    }

    pub fn clamp_of(&self, edge: EdgeId) -> Option<OneHot> {
        self.data_clamps.get(&edge).copied()
    }

    pub fn factorisation_of(&self, graph: &FactorGraph, node: NodeId) -> Vec<Vec<EdgeId>> {
        self.factorisation
            .get(&node)
            .cloned()
            .unwrap_or_else(|| default_factorisation(graph, node))
    }

    pub fn validate(&self, graph: &FactorGraph) -> Result<()> {
        for (&edge, value) in &self.data_clamps {
            if edge.0 >= graph.edges().len() {
                return Err(Error::Constraint(format!(
                    "clamp on unknown edge {}",
                    edge.0
                )));
            }
            let e = graph.edge(edge);
            match e.kind {
                EdgeKind::Categorical { dim } if dim == value.dim() => {}
                _ => {
                    return Err(Error::Constraint(format!(
                        "clamp on '{}' does not match its alphabet",
                        e.name
                    )))
                }
            }
        }
        for &node in &self.p_substitutions {
            if node.0 >= graph.nodes().len() {
                return Err(Error::Constraint(format!(
                    "p-substitution on unknown node {}",
                    node.0
                )));
            }
            let n = graph.node(node);
            if !matches!(n.kind, FactorKind::GoalObservation) {
                return Err(Error::Constraint(format!(
                    "p-substitution on '{}' which is not a goal-observation node",
                    n.name
                )));
            }
            if self.data_clamps.contains_key(&n.edges[slot::X]) {
                return Err(Error::Constraint(format!(
                    "edge '{}' is both clamped and p-substituted",
                    graph.edge(n.edges[slot::X]).name
                )));
            }
        }
        for (&node, partition) in &self.factorisation {
            if node.0 >= graph.nodes().len() {
                return Err(Error::Constraint(format!(
                    "factorisation on unknown node {}",
                    node.0
                )));
            }
            let n = graph.node(node);
            let mut seen = BTreeSet::new();
            for block in partition {
                for e in block {
                    if !n.edges.contains(e) {
                        return Err(Error::Constraint(format!(
                            "factorisation block of '{}' contains a non-adjacent edge",
                            n.name
                        )));
                    }
                    if !seen.insert(*e) {
                        return Err(Error::Constraint(format!(
                            "edge listed twice in factorisation of '{}'",
                            n.name
                        )));
                    }
                }
            }
            if seen.len() != n.edges.len() {
                return Err(Error::Constraint(format!(
                    "factorisation of '{}' does not cover all edges",
                    n.name
                )));
            }
            if normalise(partition) != normalise(&default_factorisation(graph, node)) {
                return Err(Error::Constraint(format!(
                    "unsupported factorisation for {} node '{}'",
                    n.kind.label(),
                    n.name
                )));
            }
        }
        Ok(())
    }
}

fn normalise(p: &[Vec<EdgeId>]) -> BTreeSet<BTreeSet<EdgeId>> {
    p.iter().map(|b| b.iter().copied().collect()).collect()
}

/// Constraints at time `t` (1-based) of a perception-action cycle over the
/// goal-observation slices of `graph`: slices before `t` are clamped to the
/// observations so far, the remaining slices are p-substituted. `t = T + 1`
/// yields a fully clamped (learning) objective.
pub fn apply_time_dependent_constraints(
    graph: &FactorGraph,
    t: usize,
    observations: &[OneHot],
) -> Result<ConstraintSet> {
    let slices = graph.goal_observation_nodes();
    let horizon = slices.len();
    if t == 0 || t > horizon + 1 {
        return Err(Error::Constraint(format!(
            "time {t} outside 1..={}",
            horizon + 1
        )));
    }
    if observations.len() < t - 1 {
        return Err(Error::Constraint(format!(
            "time {t} needs {} observations, got {}",
            t - 1,
            observations.len()
        )));
    }
    let mut set = ConstraintSet::new();
    for (k, &node) in slices.iter().enumerate() {
        let x = graph.node(node).edges[slot::X];
        if k + 1 < t {
            let obs = observations[k];
            let EdgeKind::Categorical { dim } = graph.edge(x).kind else {
                unreachable!("validated goal-observation node")
            };
            if obs.dim() != dim {
                return Err(Error::Constraint(format!(
                    "observation {} outside the outcome alphabet of size {dim}",
                    obs.index()
                )));
            }
            set.data_clamps.insert(x, obs);
        } else {
            set.p_substitutions.insert(node);
        }
    }
    Ok(set)
}

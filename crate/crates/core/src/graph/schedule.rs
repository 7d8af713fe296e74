//! Static message schedules.
//!
//! Categorical variables and the factors between them must form a forest once
//! parameter edges and the internal observation edges of goal-observation
//! nodes are set aside. Each tree is rooted at its last free variable. A sweep
//! first collects towards the root (forward filtering along a time series),
//! then distributes away from it (backward smoothing). Leaf factors are
//! revisited during distribution so that they see the final incoming message.
//! Parameter beliefs are refreshed after every sweep, matrices before vectors.

use std::collections::BTreeSet;

use super::{slot, ConstraintSet, EdgeId, EdgeKind, FactorGraph, FactorKind, NodeId, VarId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Towards the root.
    Collect,
    /// Away from the root, including leaf refreshes.
    Distribute,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateRule {
    /// Exact sum-product (priors, transitions).
    SumProduct,
    /// Observation node with a clamped outcome: VMP message exp(E ln A)[x̂, :].
    ClampedObservation,
    /// Observation node with a joint q(x, z) and no substitution.
    StructuredObservation,
    /// Substituted node, direct message σ(ρ).
    GfeDirect,
    /// Substituted node, Newton-stabilised indirect message.
    GfeIndirect,
}

/// How substituted goal-observation nodes compute their state message.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateMessageRule {
    Direct,
    #[default]
    Indirect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleStep {
    pub node: NodeId,
    pub edge: EdgeId,
    /// Slot of `edge` at `node`.
    pub slot: usize,
    pub direction: Direction,
    pub rule: UpdateRule,
}

#[derive(Clone, Debug)]
pub struct Schedule {
    pub steps: Vec<ScheduleStep>,
    pub roots: Vec<VarId>,
    /// Parameter variables to refresh after each sweep, in order.
    pub parameters: Vec<VarId>,
}

/// Whether a categorical variable is fixed by a clamp or a point mass.
pub fn is_fixed(graph: &FactorGraph, constraints: &ConstraintSet, v: VarId) -> bool {
    graph.point_mass_of(v).is_some()
        || graph
            .variable(v)
            .edges
            .iter()
            .any(|e| constraints.clamp_of(*e).is_some())
}

/// Update rule for messages leaving `node`.
pub fn rule_for(
    graph: &FactorGraph,
    constraints: &ConstraintSet,
    node: NodeId,
    state_rule: StateMessageRule,
) -> UpdateRule {
    let n = graph.node(node);
    match n.kind {
        FactorKind::GoalObservation => {
            if constraints.is_substituted(node) {
                match state_rule {
                    StateMessageRule::Direct => UpdateRule::GfeDirect,
                    StateMessageRule::Indirect => UpdateRule::GfeIndirect,
                }
            } else if constraints.clamp_of(n.edges[slot::X]).is_some() {
                UpdateRule::ClampedObservation
            } else {
                UpdateRule::StructuredObservation
            }
        }
        _ => UpdateRule::SumProduct,
    }
}

/// Categorical slots of `node` that take part in message passing.
pub(crate) fn message_slots(graph: &FactorGraph, node: NodeId) -> Vec<usize> {
    let n = graph.node(node);
    match n.kind {
        FactorKind::GoalObservation => vec![slot::Z],
        FactorKind::Equality | FactorKind::PointMass { .. } | FactorKind::DirichletPrior { .. } => {
            vec![]
        }
        _ => n
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(graph.edge(**e).kind, EdgeKind::Categorical { .. }))
            .map(|(s, _)| s)
            .collect(),
    }
}

impl Schedule {
    pub fn new(
        graph: &FactorGraph,
        constraints: &ConstraintSet,
        state_rule: StateMessageRule,
    ) -> Result<Self> {
        constraints.validate(graph)?;
        let nv = graph.variables().len();
        let is_message_var = |v: VarId| {
            matches!(graph.variable(v).kind, EdgeKind::Categorical { .. })
                && graph
                    .variable(v)
                    .factors
                    .iter()
                    .any(|&(n, s)| message_slots(graph, n).contains(&s))
        };
        let mut visited_var = vec![false; nv];
        let mut visited_node = vec![false; graph.nodes().len()];
        let mut collect = Vec::new();
        let mut distribute = Vec::new();
        let mut roots = Vec::new();

        // candidate roots: free message variables, last first
        let candidates: Vec<VarId> = (0..nv)
            .rev()
            .map(VarId)
            .filter(|&v| is_message_var(v) && !is_fixed(graph, constraints, v))
            .collect();
        for root in candidates {
            if visited_var[root.0] {
                continue;
            }
            roots.push(root);
            let mut c = Vec::new();
            let mut d = Vec::new();
            visit_var(
                graph,
                constraints,
                state_rule,
                root,
                None,
                &mut visited_var,
                &mut visited_node,
                &mut c,
                &mut d,
            )?;
            collect.extend(c);
            distribute.extend(d);
        }

        let mut parameters: Vec<VarId> = (0..nv)
            .map(VarId)
            .filter(|&v| {
                matches!(graph.variable(v).kind, EdgeKind::Parameter { .. })
                    && graph.point_mass_of(v).is_none()
            })
            .collect();
        parameters.sort_by_key(|&v| {
            graph.variable(v).factors.iter().any(|&(n, s)| {
                matches!(graph.node(n).kind, FactorKind::GoalObservation) && s == slot::C
            })
        });

        let mut steps = collect;
        steps.extend(distribute);
        Ok(Self {
            steps,
            roots,
            parameters,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn visit_var(
    graph: &FactorGraph,
    constraints: &ConstraintSet,
    state_rule: StateMessageRule,
    v: VarId,
    parent: Option<NodeId>,
    visited_var: &mut [bool],
    visited_node: &mut [bool],
    collect: &mut Vec<ScheduleStep>,
    distribute: &mut Vec<ScheduleStep>,
) -> Result<()> {
    if visited_var[v.0] {
        return Err(Error::Model(format!(
            "categorical variables around '{}' form a loop; schedules need a tree",
            graph.variable(v).name
        )));
    }
    visited_var[v.0] = true;
    let mut children: Vec<(NodeId, usize)> = graph
        .variable(v)
        .factors
        .iter()
        .copied()
        .filter(|&(n, s)| Some(n) != parent && message_slots(graph, n).contains(&s))
        .collect();
    // leaves that depend on the incoming message go last so they see fresh input
    children.sort_by_key(|&(n, _)| matches!(graph.node(n).kind, FactorKind::GoalObservation));
    for (n, s) in children {
        let rule = rule_for(graph, constraints, n, state_rule);
        let step = |slot: usize, direction| ScheduleStep {
            node: n,
            edge: graph.node(n).edges[slot],
            slot,
            direction,
            rule,
        };
        if visited_node[n.0] {
            return Err(Error::Model(format!(
                "factor '{}' is reached twice; schedules need a tree",
                graph.node(n).name
            )));
        }
        visited_node[n.0] = true;
        let others: Vec<usize> = message_slots(graph, n)
            .into_iter()
            .filter(|&o| o != s)
            .collect();
        let mut sub_collect = Vec::new();
        let mut sub_distribute = Vec::new();
        for &o in &others {
            let w = graph.slot_var(n, o);
            if is_fixed(graph, constraints, w) {
                continue;
            }
            visit_var(
                graph,
                constraints,
                state_rule,
                w,
                Some(n),
                visited_var,
                visited_node,
                &mut sub_collect,
                &mut sub_distribute,
            )?;
        }
        collect.extend(sub_collect);
        let free_children: Vec<usize> = others
            .iter()
            .copied()
            .filter(|&o| !is_fixed(graph, constraints, graph.slot_var(n, o)))
            .collect();
        // a direct message reads the belief it feeds into; two evaluations per
        // sweep would leave the collected and distributed copies out of step
        if !(rule == UpdateRule::GfeDirect && free_children.is_empty()) {
            collect.push(step(s, Direction::Collect));
        }
        if free_children.is_empty() {
            distribute.push(step(s, Direction::Distribute));
        }
        for o in free_children {
            distribute.push(step(o, Direction::Distribute));
        }
        distribute.extend(sub_distribute);
    }
    Ok(())
}

/// Marks the edges of `graph` that are categorical and carry messages.
pub fn message_edges(graph: &FactorGraph) -> BTreeSet<EdgeId> {
    let mut out = BTreeSet::new();
    for (i, _) in graph.nodes().iter().enumerate() {
        for s in message_slots(graph, NodeId(i)) {
            out.insert(graph.node(NodeId(i)).edges[s]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{ProbVector, TransitionMatrix};
    use crate::graph::GraphBuilder;

    fn chain(len: usize) -> FactorGraph {
        let mut b = GraphBuilder::new();
        let mut prev = b.categorical_edge("z0", 2);
        b.factor(
            "prior",
            FactorKind::CategoricalPrior {
                p: ProbVector::uniform(2),
            },
            &[prev],
        );
        for k in 1..=len {
            let z = b.categorical_edge(&format!("z{k}"), 2);
            b.factor(
                &format!("b{k}"),
                FactorKind::Transition {
                    matrices: vec![TransitionMatrix::identity(2)],
                },
                &[z, prev],
            );
            prev = z;
        }
        b.build().unwrap()
    }

    #[test]
    fn chain_collects_forward_then_distributes_backward() {
        let g = chain(3);
        let s = Schedule::new(&g, &ConstraintSet::new(), StateMessageRule::Indirect).unwrap();
        assert_eq!(s.roots, vec![g.var_id("z3").unwrap()]);
        let names: Vec<(&str, Direction)> = s
            .steps
            .iter()
            .map(|st| (g.node(st.node).name.as_str(), st.direction))
            .collect();
        use Direction::*;
        assert_eq!(
            names,
            vec![
                ("prior", Collect),
                ("b1", Collect),
                ("b2", Collect),
                ("b3", Collect),
                ("b3", Distribute),
                ("b2", Distribute),
                ("b1", Distribute),
                ("prior", Distribute),
            ]
        );
    }

    #[test]
    fn every_message_is_produced_before_it_is_needed() {
        // with sum-product on a tree, each collect step only needs messages
        // from the subtree below it, which appear earlier
        let g = chain(4);
        let s = Schedule::new(&g, &ConstraintSet::new(), StateMessageRule::Indirect).unwrap();
        let mut produced = BTreeSet::new();
        for st in s
            .steps
            .iter()
            .filter(|st| st.direction == Direction::Collect)
        {
            for o in message_slots(&g, st.node) {
                if o != st.slot {
                    let v = g.slot_var(st.node, o);
                    for &(n2, s2) in &g.variable(v).factors {
                        if n2 != st.node {
                            assert!(
                                produced.contains(&(n2, s2)),
                                "missing input for {}",
                                g.node(st.node).name
                            );
                        }
                    }
                }
            }
            produced.insert((st.node, st.slot));
        }
    }

    #[test]
    fn loops_are_rejected() {
        let mut b = GraphBuilder::new();
        let x = b.categorical_edge("x", 2);
        let y = b.categorical_edge("y", 2);
        let x2 = b.categorical_edge("x2", 2);
        let y2 = b.categorical_edge("y2", 2);
        let t = || FactorKind::Transition {
            matrices: vec![TransitionMatrix::identity(2)],
        };
        b.factor("t1", t(), &[y, x]);
        b.factor("t2", t(), &[y2, x2]);
        b.factor("eqx", FactorKind::Equality, &[x, x2]);
        b.factor("eqy", FactorKind::Equality, &[y, y2]);
        let g = b.build().unwrap();
        assert!(Schedule::new(&g, &ConstraintSet::new(), StateMessageRule::Indirect).is_err());
    }
}

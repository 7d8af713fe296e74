//! Bethe bookkeeping: F = Σₐ F[qₐ] + Σᵢ (dᵢ − 1) H[qᵢ].
//!
//! Node-local terms follow each node's factorisation. A substituted
//! goal-observation node contributes its average energy U = −z̄ᵀρ minus the
//! entropies of its separate blocks, which turns the total into the GFE.
//! Logarithms of exact zeros are never floored here: mass on a zero of a
//! factor is reported as a support mismatch.

use std::f64::consts::LN_2;

use ndarray::{Array1, Array2};

use super::{
    slot, ConstraintSet, EdgeKind, FactorGraph, FactorKind, Marginals, NodeId, ParamBelief,
    PointValue, VarId,
};
use crate::dist::{xlogx, ProbVector};
use crate::error::{Error, Result};

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / LN_2
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreeEnergyBreakdown {
    /// Total in nats.
    pub total: f64,
    /// Node-local terms, indexed by node.
    pub nodes: Vec<f64>,
    /// Σᵢ (dᵢ − 1) H[qᵢ]
    pub entropy_correction: f64,
}

impl FreeEnergyBreakdown {
    pub fn bits(&self) -> f64 {
        nats_to_bits(self.total)
    }
}

fn weighted_log(w: f64, log_v: f64, location: &dyn Fn() -> String) -> Result<f64> {
    if w == 0.0 {
        return Ok(0.0);
    }
    if log_v == f64::NEG_INFINITY {
        return Err(Error::SupportMismatch {
            location: location(),
        });
    }
    Ok(w * log_v)
}

fn raw_ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Entropy of a variable's belief; zero for fixed categoricals, point masses
/// are excluded (None).
fn var_entropy(
    graph: &FactorGraph,
    constraints: &ConstraintSet,
    m: &Marginals,
    v: VarId,
) -> Option<f64> {
    match graph.variable(v).kind {
        EdgeKind::Categorical { .. } => {
            if super::schedule::is_fixed(graph, constraints, v) {
                Some(0.0)
            } else {
                Some(m.categorical(v).entropy())
            }
        }
        EdgeKind::Parameter { .. } => m.param(v).entropy(),
    }
}

/// Belief over a categorical variable, with clamps materialised.
pub(crate) fn categorical_belief(
    graph: &FactorGraph,
    constraints: &ConstraintSet,
    m: &Marginals,
    v: VarId,
) -> ProbVector {
    for &e in &graph.variable(v).edges {
        if let Some(h) = constraints.clamp_of(e) {
            return h.into();
        }
    }
    if let Some(PointValue::OneHot(h)) = graph.point_mass_of(v) {
        return (*h).into();
    }
    m.categorical(v).clone()
}

/// Average energy of a substituted goal-observation node:
/// U = Σⱼ z̄ⱼ h̄ⱼ − Σₓ (Āz̄)ₓ E[ln cₓ] + Σₓ (Āz̄)ₓ ln (Āz̄)ₓ.
pub fn substituted_average_energy(
    a: &ParamBelief,
    c: &ParamBelief,
    z_bar: &Array1<f64>,
    location: &dyn Fn() -> String,
) -> Result<f64> {
    let a_bar = a.mean();
    let h_bar = a.mean_column_entropies();
    let log_c = c.mean_log().column(0).to_owned();
    let pred = a_bar.dot(z_bar);
    let mut u = z_bar.dot(&h_bar);
    for (x, &p) in pred.iter().enumerate() {
        u -= weighted_log(p, log_c[x], location)?;
        u += xlogx(p);
    }
    Ok(u)
}

#[allow(clippy::too_many_arguments)]
fn observation_term(
    graph: &FactorGraph,
    constraints: &ConstraintSet,
    m: &Marginals,
    node: NodeId,
    h_a: f64,
    h_c: f64,
) -> Result<f64> {
    let n = graph.node(node);
    let loc = || format!("goal-observation node '{}'", n.name);
    let zv = graph.slot_var(node, slot::Z);
    let a = m.param(graph.slot_var(node, slot::A));
    let c = m.param(graph.slot_var(node, slot::C));
    let z = categorical_belief(graph, constraints, m, zv);
    let h_z = var_entropy(graph, constraints, m, zv).unwrap_or(0.0);
    if constraints.is_substituted(node) {
        let u = substituted_average_energy(a, c, z.as_array(), &loc)?;
        return Ok(u - h_z - h_a - h_c);
    }
    let log_a = a.mean_log();
    let log_c = c.mean_log();
    if let Some(xh) = constraints.clamp_of(n.edges[slot::X]) {
        let x = xh.index();
        let mut e_ln_f = weighted_log(1.0, log_c[[x, 0]], &loc)?;
        for (j, &zj) in z.as_array().iter().enumerate() {
            e_ln_f += weighted_log(zj, log_a[[x, j]], &loc)?;
        }
        return Ok(-h_z - h_a - h_c - e_ln_f);
    }
    let joint = m.joints.get(&node).ok_or_else(|| {
        Error::Model(format!(
            "missing joint belief q(x, z) for node '{}'",
            n.name
        ))
    })?;
    let mut term = -h_a - h_c;
    for ((x, j), &q) in joint.indexed_iter() {
        term += xlogx(q);
        term -= weighted_log(q, log_a[[x, j]], &loc)?;
        term -= weighted_log(q, log_c[[x, 0]], &loc)?;
    }
    Ok(term)
}

fn transition_term(name: &str, joint: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    let loc = || format!("transition node '{name}'");
    let mut term = 0.0;
    for ((o, i), &q) in joint.indexed_iter() {
        term += xlogx(q);
        term -= weighted_log(q, raw_ln(b[[o, i]]), &loc)?;
    }
    Ok(term)
}

/// Evaluates the constrained free energy for the given beliefs. `controls`
/// selects the matrix of each controlled transition node, in
/// [`FactorGraph::controlled_nodes`] order.
pub fn bethe_free_energy(
    graph: &FactorGraph,
    constraints: &ConstraintSet,
    marginals: &Marginals,
    controls: &[usize],
) -> Result<FreeEnergyBreakdown> {
    let controlled = graph.controlled_nodes();
    if controls.len() != controlled.len() {
        return Err(Error::Model(format!(
            "{} controls given for {} controlled nodes",
            controls.len(),
            controlled.len()
        )));
    }
    let entropies: Vec<Option<f64>> = (0..graph.variables().len())
        .map(|i| var_entropy(graph, constraints, marginals, VarId(i)))
        .collect();

    let mut nodes = Vec::with_capacity(graph.nodes().len());
    for (i, n) in graph.nodes().iter().enumerate() {
        let id = NodeId(i);
        let term = match &n.kind {
            FactorKind::CategoricalPrior { p } => {
                let v = graph.slot_var(id, 0);
                let q = categorical_belief(graph, constraints, marginals, v);
                let loc = || format!("prior node '{}'", n.name);
                let mut t = 0.0;
                for (&qi, &pi) in q.as_array().iter().zip(p.as_array()) {
                    t += xlogx(qi) - weighted_log(qi, raw_ln(pi), &loc)?;
                }
                t
            }
            FactorKind::DirichletPrior { prior } => {
                let v = graph.slot_var(id, 0);
                match marginals.param(v) {
                    ParamBelief::PointMass(a) => {
                        let d = prior.log_density_from_log(&a.as_array().mapv(raw_ln));
                        if !d.is_finite() {
                            return Err(Error::SupportMismatch {
                                location: format!("Dirichlet prior node '{}'", n.name),
                            });
                        }
                        -d
                    }
                    q => -q.entropy().unwrap_or(0.0) - prior.expected_log_density(&q.mean_log()),
                }
            }
            FactorKind::Transition { matrices } => {
                let k = controlled
                    .iter()
                    .position(|&c| c == id)
                    .map_or(0, |p| controls[p]);
                let b = matrices.get(k).ok_or_else(|| {
                    Error::Model(format!("control {k} out of range at '{}'", n.name))
                })?;
                let joint = marginals.joints.get(&id).ok_or_else(|| {
                    Error::Model(format!("missing joint belief for transition '{}'", n.name))
                })?;
                transition_term(&n.name, joint, b.as_array())?
            }
            FactorKind::GoalObservation => {
                let h_a = entropies[graph.slot_var(id, slot::A).0].unwrap_or(0.0);
                let h_c = entropies[graph.slot_var(id, slot::C).0].unwrap_or(0.0);
                observation_term(graph, constraints, marginals, id, h_a, h_c)?
            }
            FactorKind::Equality | FactorKind::PointMass { .. } => 0.0,
        };
        if !term.is_finite() {
            return Err(Error::NonFinite {
                context: format!("free energy of node '{}'", n.name),
            });
        }
        nodes.push(term);
    }

    let entropy_correction: f64 = graph
        .variables()
        .iter()
        .zip(&entropies)
        .filter_map(|(v, h)| h.map(|h| (v.degree() as f64 - 1.0) * h))
        .sum();
    let total = nodes.iter().sum::<f64>() + entropy_correction;
    Ok(FreeEnergyBreakdown {
        total,
        nodes,
        entropy_correction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{OneHot, TransitionMatrix};
    use crate::graph::{GraphBuilder, VarBelief};
    use ndarray::array;

    #[test]
    fn prior_with_matching_belief_has_zero_energy() {
        let p = ProbVector::new(array![0.2, 0.3, 0.5]).unwrap();
        let mut b = GraphBuilder::new();
        let z = b.categorical_edge("z", 3);
        b.factor("p", FactorKind::CategoricalPrior { p: p.clone() }, &[z]);
        let g = b.build().unwrap();
        let mut m = Marginals::initial(&g);
        m.vars[0] = VarBelief::Categorical(p);
        let f = bethe_free_energy(&g, &ConstraintSet::new(), &m, &[]).unwrap();
        assert!(f.total.abs() < 1e-15);
    }

    #[test]
    fn two_node_chain_equals_minus_log_z() {
        // p(a) B(b|a) pb(b) is unnormalised; the exact joint gives F = −ln Z
        let pa = ProbVector::new(array![0.3, 0.7]).unwrap();
        let pb = ProbVector::new(array![0.6, 0.4]).unwrap();
        let bm = array![[0.9, 0.2], [0.1, 0.8]];
        let mut b = GraphBuilder::new();
        let ea = b.categorical_edge("a", 2);
        let eb = b.categorical_edge("b", 2);
        b.factor("pa", FactorKind::CategoricalPrior { p: pa.clone() }, &[ea]);
        b.factor(
            "t",
            FactorKind::Transition {
                matrices: vec![TransitionMatrix::new(bm.clone()).unwrap()],
            },
            &[eb, ea],
        );
        b.factor("pb", FactorKind::CategoricalPrior { p: pb.clone() }, &[eb]);
        let g = b.build().unwrap();

        let mut joint = Array2::zeros((2, 2));
        for o in 0..2 {
            for i in 0..2 {
                joint[[o, i]] = pa.get(i) * bm[[o, i]] * pb.get(o);
            }
        }
        let z: f64 = joint.sum();
        joint /= z;
        let qa = joint.sum_axis(ndarray::Axis(0));
        let qb = joint.sum_axis(ndarray::Axis(1));

        let mut m = Marginals::initial(&g);
        m.vars[g.var_id("a").unwrap().0] = VarBelief::Categorical(ProbVector::new(qa).unwrap());
        m.vars[g.var_id("b").unwrap().0] = VarBelief::Categorical(ProbVector::new(qb).unwrap());
        m.joints.insert(g.node_id("t").unwrap(), joint);
        let f = bethe_free_energy(&g, &ConstraintSet::new(), &m, &[]).unwrap();
        assert!(
            (f.total + z.ln()).abs() < 1e-12,
            "{} vs {}",
            f.total,
            -z.ln()
        );
    }

    #[test]
    fn clamped_observation_on_zero_is_a_mismatch() {
        let mut b = GraphBuilder::new();
        let x = b.categorical_edge("x", 2);
        let z = b.categorical_edge("z", 2);
        let a = b.parameter_edge("A", 2, 2);
        let c = b.parameter_edge("c", 2, 1);
        b.factor(
            "pz",
            FactorKind::CategoricalPrior {
                p: ProbVector::uniform(2),
            },
            &[z],
        );
        b.factor(
            "pa",
            FactorKind::PointMass {
                value: PointValue::Matrix(Array2::eye(2)),
            },
            &[a],
        );
        b.factor(
            "pc",
            FactorKind::PointMass {
                value: PointValue::Matrix(array![[0.5], [0.5]]),
            },
            &[c],
        );
        let obs = b.factor("obs", FactorKind::GoalObservation, &[x, z, a, c]);
        let g = b.build().unwrap();
        let cs = ConstraintSet::new().with_clamp(x, OneHot::new(0, 2).unwrap());
        let mut m = Marginals::initial(&g);
        m.vars[g.var_of(z).0] = VarBelief::Categorical(ProbVector::new(array![0.0, 1.0]).unwrap());
        let err = bethe_free_energy(&g, &cs, &m, &[]).unwrap_err();
        assert!(matches!(err, Error::SupportMismatch { .. }));
        // consistent state is fine and equals −ln p(x̂, z) − ln c
        m.vars[g.var_of(z).0] = VarBelief::Categorical(ProbVector::new(array![1.0, 0.0]).unwrap());
        let f = bethe_free_energy(&g, &cs, &m, &[]).unwrap();
        assert!((f.total - (2.0f64.ln() + 2.0f64.ln())).abs() < 1e-12);
        let _ = obs;
    }

    #[test]
    fn bits_conversion() {
        assert!((nats_to_bits(LN_2) - 1.0).abs() < 1e-15);
    }
}

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use super::{EdgeKind, FactorGraph, NodeId, VarId};
use crate::dist::{column_entropies, Dirichlet, ProbVector, TransitionMatrix};
use crate::gfe::ImportanceEstimate;

/// Belief over a parameter (matrix or vector) variable.
#[derive(Clone, Debug)]
pub enum ParamBelief {
    PointMass(TransitionMatrix),
    Dirichlet(Dirichlet),
    /// Dirichlet proposal reweighted by non-conjugate log-messages.
    Sampled(ImportanceEstimate),
}

impl ParamBelief {
    /// E[A]
    pub fn mean(&self) -> Array2<f64> {
        match self {
            ParamBelief::PointMass(a) => a.as_array().clone(),
            ParamBelief::Dirichlet(d) => d.mean().into_array(),
            ParamBelief::Sampled(s) => s.a_bar.as_array().clone(),
        }
    }

    /// E[ln A]; exact zeros of a point mass map to −∞.
    pub fn mean_log(&self) -> Array2<f64> {
        match self {
            ParamBelief::PointMass(a) => {
                a.as_array()
                    .mapv(|x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
            }
            ParamBelief::Dirichlet(d) => d.mean_log(),
            ParamBelief::Sampled(s) => s.mean_log.clone(),
        }
    }

    /// exp(E[ln A]), the matrix used by variational messages.
    pub fn geometric_mean(&self) -> Array2<f64> {
        match self {
            ParamBelief::PointMass(a) => a.as_array().clone(),
            _ => self.mean_log().mapv(f64::exp),
        }
    }

    /// E[h(A)], the expected column entropies.
    pub fn mean_column_entropies(&self) -> Array1<f64> {
        match self {
            ParamBelief::PointMass(a) => column_entropies(a),
            ParamBelief::Dirichlet(d) => d.expected_column_entropies(),
            ParamBelief::Sampled(s) => s.h_bar.clone(),
        }
    }

    /// Differential entropy; `None` for a point mass (excluded from the objective).
    pub fn entropy(&self) -> Option<f64> {
        match self {
            ParamBelief::PointMass(_) => None,
            ParamBelief::Dirichlet(d) => Some(d.entropy()),
            ParamBelief::Sampled(s) => Some(-s.neg_entropy),
        }
    }

    pub fn as_dirichlet(&self) -> Option<&Dirichlet> {
        match self {
            ParamBelief::Dirichlet(d) => Some(d),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum VarBelief {
    Categorical(ProbVector),
    Param(ParamBelief),
}

impl VarBelief {
    pub fn categorical(&self) -> Option<&ProbVector> {
        match self {
            VarBelief::Categorical(p) => Some(p),
            _ => None,
        }
    }

    pub fn param(&self) -> Option<&ParamBelief> {
        match self {
            VarBelief::Param(p) => Some(p),
            _ => None,
        }
    }
}

/// Variable beliefs plus joint node beliefs of structured (bridged) factors.
#[derive(Clone, Debug)]
pub struct Marginals {
    pub vars: Vec<VarBelief>,
    /// Joint beliefs: transitions store q(out, in), unsubstituted
    /// goal-observation nodes store q(x, z).
    pub joints: BTreeMap<NodeId, Array2<f64>>,
}

impl Marginals {
    /// Uniform categorical beliefs and prior-initialised parameter beliefs.
    pub fn initial(graph: &FactorGraph) -> Self {
        let vars = graph
            .variables()
            .iter()
            .enumerate()
            .map(|(i, v)| match v.kind {
                EdgeKind::Categorical { dim } => VarBelief::Categorical(ProbVector::uniform(dim)),
                EdgeKind::Parameter { rows, cols } => {
                    VarBelief::Param(initial_param_belief(graph, VarId(i), rows, cols))
                }
            })
            .collect();
        Self {
            vars,
            joints: BTreeMap::new(),
        }
    }

    pub fn categorical(&self, v: VarId) -> &ProbVector {
        self.vars[v.0].categorical().expect("categorical variable")
    }

    pub fn param(&self, v: VarId) -> &ParamBelief {
        self.vars[v.0].param().expect("parameter variable")
    }
}

fn initial_param_belief(graph: &FactorGraph, v: VarId, rows: usize, cols: usize) -> ParamBelief {
    use super::{FactorKind, PointValue};
    if let Some(PointValue::Matrix(m)) = graph.point_mass_of(v) {
        return ParamBelief::PointMass(
            TransitionMatrix::new(m.clone()).expect("validated point mass"),
        );
    }
    let mut alpha: Option<Array2<f64>> = None;
    for &(n, _) in &graph.variable(v).factors {
        if let FactorKind::DirichletPrior { prior } = &graph.node(n).kind {
            alpha = Some(match alpha {
                None => prior.alpha().clone(),
                Some(a) => a + prior.alpha() - 1.0,
            });
        }
    }
    let alpha = alpha.unwrap_or_else(|| Array2::ones((rows, cols)));
    ParamBelief::Dirichlet(Dirichlet::new(alpha).expect("positive prior concentrations"))
}

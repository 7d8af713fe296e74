//! Policy enumeration, scoring and selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EngineConfig, InferenceRun};
use crate::error::{Error, Result};
use crate::graph::{ConstraintSet, FactorGraph, Marginals};

/// Control indices for the not-yet-executed controlled transitions.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub controls: Vec<usize>,
}

/// All policies over the given per-step option counts, in lexicographic order.
pub fn enumerate_policies(options: &[usize]) -> Vec<Policy> {
    let mut out = vec![Policy { controls: vec![] }];
    for &n in options {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |u| {
                    let mut c = p.controls.clone();
                    c.push(u);
                    Policy { controls: c }
                })
            })
            .collect();
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub policy: Policy,
    /// Free energy per sweep, in bits.
    pub gfe_trace: Vec<f64>,
    /// Mean of the trace after burn-in; +∞ for an infeasible policy.
    pub score: f64,
    pub converged: bool,
}

/// Infeasible policies (a goal with zero mass on a predicted outcome, a
/// vanishing normaliser or a non-finite energy) score +∞ instead of failing.
fn infeasible(e: &Error) -> bool {
    matches!(
        e,
        Error::SupportMismatch { .. } | Error::NonFinite { .. } | Error::ZeroNormaliser { .. }
    )
}

/// Scores one policy. `executed` holds controls already carried out; the
/// full assignment is `executed ++ policy` in controlled-node order.
pub fn evaluate_policy(
    graph: &FactorGraph,
    constraints: &ConstraintSet,
    executed: &[usize],
    policy: &Policy,
    config: &EngineConfig,
    seed: u64,
) -> Result<PolicyEvaluation> {
    config.validate()?;
    let mut controls = executed.to_vec();
    controls.extend(&policy.controls);
    let outcome = InferenceRun::new(graph, constraints, &controls, *config, seed)
        .and_then(|mut run| run.run(config.sweeps));
    match outcome {
        Ok(trace) => {
            let tail = &trace[config.burn_in..];
            let score = tail.iter().sum::<f64>() / tail.len() as f64;
            Ok(PolicyEvaluation {
                policy: policy.clone(),
                gfe_trace: trace,
                score,
                converged: score.is_finite(),
            })
        }
        Err(e) if infeasible(&e) => Ok(PolicyEvaluation {
            policy: policy.clone(),
            gfe_trace: vec![],
            score: f64::INFINITY,
            converged: false,
        }),
        Err(e) => Err(e),
    }
}

/// Scores all policies in parallel. Policy `i` uses seed `seed ^ i`, so the
/// result does not depend on the thread count.
pub fn evaluate_policies(
    graph: &FactorGraph,
    constraints: &ConstraintSet,
    executed: &[usize],
    policies: &[Policy],
    config: &EngineConfig,
    seed: u64,
) -> Result<Vec<PolicyEvaluation>> {
    policies
        .par_iter()
        .enumerate()
        .map(|(i, p)| evaluate_policy(graph, constraints, executed, p, config, seed ^ i as u64))
        .collect()
}

/// Index of the policy maximising ln p(u) − G(u), with G in bits converted to
/// nats. Without a prior this is the lowest score; ties go to the
/// lexicographically smallest policy.
pub fn select_policy(evaluations: &[PolicyEvaluation], log_prior: Option<&[f64]>) -> Result<usize> {
    if let Some(lp) = log_prior {
        if lp.len() != evaluations.len() {
            return Err(crate::error::shape_err(
                "policy prior",
                evaluations.len(),
                lp.len(),
            ));
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, e) in evaluations.iter().enumerate() {
        if !e.score.is_finite() {
            continue;
        }
        let value = log_prior.map_or(0.0, |lp| lp[i]) - e.score * std::f64::consts::LN_2;
        best = match best {
            None => Some((value, i)),
            Some((bv, bi)) => {
                if value > bv || (value == bv && e.policy < evaluations[bi].policy) {
                    Some((value, i))
                } else {
                    Some((bv, bi))
                }
            }
        };
    }
    best.map(|(_, i)| i).ok_or(Error::NoFinitePolicy)
}

#[derive(Clone, Debug)]
pub struct LearningOutcome {
    pub marginals: Marginals,
    /// Free energy per sweep, in bits.
    pub trace: Vec<f64>,
}

/// Inference with every control fixed, iterated until the free energy settles
/// or the sweep budget runs out. Used after a trial to update parameters.
pub fn learn(
    graph: &FactorGraph,
    constraints: &ConstraintSet,
    controls: &[usize],
    config: &EngineConfig,
    seed: u64,
) -> Result<LearningOutcome> {
    let mut run = InferenceRun::new(graph, constraints, controls, *config, seed)?;
    let mut trace: Vec<f64> = Vec::new();
    for _ in 0..config.learning_sweeps.max(1) {
        run.sweep()?;
        let f = crate::graph::nats_to_bits(run.free_energy()?.total);
        let done = trace
            .last()
            .is_some_and(|&p| (p - f).abs() < config.learning_tolerance);
        trace.push(f);
        if done {
            break;
        }
    }
    Ok(LearningOutcome {
        marginals: run.marginals().clone(),
        trace,
    })
}

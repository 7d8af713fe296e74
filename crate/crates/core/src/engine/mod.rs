//! Executes schedules: sum-product and VMP updates for ordinary nodes, the
//! goal-observation updates for substituted nodes, parameter refreshes and
//! per-sweep free energies.

mod policy;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{Dirichlet, OneHot, ProbVector, TransitionMatrix};
use crate::error::{Error, Result};
use crate::gfe::{
    importance_expectations, log_message_to_matrix, message_to_state_direct,
    message_to_state_newton, rho, LogMessage, NewtonConfig, ObservationStats,
};
use crate::graph::free_energy::categorical_belief;
use crate::graph::schedule::{is_fixed, message_slots};
use crate::graph::{
    bethe_free_energy, nats_to_bits, slot, ConstraintSet, EdgeKind, FactorGraph, FactorKind,
    FreeEnergyBreakdown, Marginals, NodeId, ParamBelief, PointValue, Schedule, StateMessageRule,
    UpdateRule, VarBelief, VarId,
};

pub use policy::{
    enumerate_policies, evaluate_policies, evaluate_policy, learn, select_policy, LearningOutcome,
    Policy, PolicyEvaluation,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Sweeps per policy evaluation.
    pub sweeps: usize,
    /// Leading sweeps excluded from the policy score.
    pub burn_in: usize,
    /// Importance samples per q(A) refresh.
    pub importance_samples: usize,
    pub state_rule: StateMessageRule,
    #[serde(skip)]
    pub newton: NewtonConfig,
    /// Maximum sweeps of a learning (fully clamped) pass.
    pub learning_sweeps: usize,
    /// Early exit of a learning pass when |ΔF| falls below this.
    pub learning_tolerance: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            sweeps: 30,
            burn_in: 10,
            importance_samples: 200,
            state_rule: StateMessageRule::Indirect,
            newton: NewtonConfig::default(),
            learning_sweeps: 20,
            learning_tolerance: 1e-8,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::Config("sweeps must be at least 1".into()));
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::Config(format!(
                "burn-in {} must be smaller than the sweep count {}",
                self.burn_in, self.sweeps
            )));
        }
        if self.importance_samples == 0 {
            return Err(Error::Config(
                "importance sample count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Forward and backward sum-product messages of a transition node:
/// B·μ(in) towards `out` and Bᵀ·μ(out) towards `in`, both normalised.
pub fn transition_messages(
    b: &TransitionMatrix,
    into_in: &Array1<f64>,
    into_out: &Array1<f64>,
) -> Result<(ProbVector, ProbVector)> {
    let fwd = ProbVector::normalised(b.as_array().dot(into_in))?;
    let bwd = ProbVector::normalised(b.as_array().t().dot(into_out))?;
    Ok((fwd, bwd))
}

/// Conjugate Dirichlet update with a clamped observation: α + x̂ z̄ᵀ.
pub fn dirichlet_categorical_updates(
    prior: &Dirichlet,
    x_hat: &OneHot,
    z_bar: &ProbVector,
) -> Result<Dirichlet> {
    let mut counts = Array2::zeros((prior.rows(), prior.cols()));
    if x_hat.dim() != prior.rows() || z_bar.len() != prior.cols() {
        return Err(crate::error::shape_err(
            "Dirichlet-categorical update",
            format!("({}, {})", prior.rows(), prior.cols()),
            format!("({}, {})", x_hat.dim(), z_bar.len()),
        ));
    }
    counts.row_mut(x_hat.index()).assign(z_bar.as_array());
    prior.add_counts(&counts)
}

/// Diagnostics of the Newton corrector over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolverStats {
    pub solves: usize,
    pub fallbacks: usize,
    pub max_residual: f64,
}

/// One inference run over a fixed graph, constraint set and control assignment.
pub struct InferenceRun<'g> {
    graph: &'g FactorGraph,
    constraints: ConstraintSet,
    schedule: Schedule,
    /// Matrix index per node (0 for uncontrolled nodes).
    node_control: Vec<usize>,
    controls: Vec<usize>,
    messages: Vec<Vec<Option<Array1<f64>>>>,
    marginals: Marginals,
    rng: ChaCha8Rng,
    config: EngineConfig,
    solver: SolverStats,
}

fn normalise(v: Array1<f64>, context: &str) -> Result<Array1<f64>> {
    ProbVector::normalised(v)
        .map(ProbVector::into_array)
        .map_err(|e| match e {
            Error::ZeroNormaliser { .. } => Error::ZeroNormaliser {
                context: context.to_string(),
            },
            other => other,
        })
}

impl<'g> InferenceRun<'g> {
    pub fn new(
        graph: &'g FactorGraph,
        constraints: &ConstraintSet,
        controls: &[usize],
        config: EngineConfig,
        seed: u64,
    ) -> Result<Self> {
        let controlled = graph.controlled_nodes();
        if controls.len() != controlled.len() {
            return Err(Error::Model(format!(
                "{} controls given for {} controlled nodes",
                controls.len(),
                controlled.len()
            )));
        }
        let mut node_control = vec![0; graph.nodes().len()];
        for (&n, &u) in controlled.iter().zip(controls) {
            let FactorKind::Transition { matrices } = &graph.node(n).kind else {
                unreachable!("controlled nodes are transitions")
            };
            if u >= matrices.len() {
                return Err(Error::Model(format!(
                    "control {u} out of range for '{}' with {} options",
                    graph.node(n).name,
                    matrices.len()
                )));
            }
            node_control[n.0] = u;
        }
        let schedule = Schedule::new(graph, constraints, config.state_rule)?;
        let messages = graph
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let slots = message_slots(graph, NodeId(i));
                (0..n.edges.len())
                    .map(|s| {
                        slots
                            .contains(&s)
                            .then(|| match graph.edge(n.edges[s]).kind {
                                EdgeKind::Categorical { dim } => {
                                    Array1::from_elem(dim, 1.0 / dim as f64)
                                }
                                EdgeKind::Parameter { .. } => {
                                    unreachable!("message slots are categorical")
                                }
                            })
                    })
                    .collect()
            })
            .collect();
        let mut run = Self {
            graph,
            constraints: constraints.clone(),
            schedule,
            node_control,
            controls: controls.to_vec(),
            messages,
            marginals: Marginals::initial(graph),
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
            solver: SolverStats::default(),
        };
        run.refresh_categoricals()?;
        Ok(run)
    }

    pub fn graph(&self) -> &FactorGraph {
        self.graph
    }

    pub fn marginals(&self) -> &Marginals {
        &self.marginals
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn solver_stats(&self) -> SolverStats {
        self.solver
    }

    /// Message from `node` towards the variable on `slot`.
    pub fn message(&self, node: NodeId, slot: usize) -> Option<&Array1<f64>> {
        self.messages[node.0][slot].as_ref()
    }

    fn matrix(&self, node: NodeId) -> &TransitionMatrix {
        let FactorKind::Transition { matrices } = &self.graph.node(node).kind else {
            unreachable!("transition node expected")
        };
        &matrices[self.node_control[node.0]]
    }

    /// Product of the messages into variable `v`, leaving out `except`.
    fn cavity(&self, v: VarId, except: Option<(NodeId, usize)>) -> Array1<f64> {
        if is_fixed(self.graph, &self.constraints, v) {
            return categorical_belief(self.graph, &self.constraints, &self.marginals, v)
                .into_array();
        }
        let EdgeKind::Categorical { dim } = self.graph.variable(v).kind else {
            unreachable!("categorical variable expected")
        };
        let mut acc = Array1::ones(dim);
        for &(n, s) in &self.graph.variable(v).factors {
            if Some((n, s)) == except {
                continue;
            }
            if let Some(m) = &self.messages[n.0][s] {
                acc *= m;
            }
        }
        acc
    }

    fn belief(&self, v: VarId) -> Result<ProbVector> {
        let c = self.cavity(v, None);
        ProbVector::normalised(c).map_err(|_| Error::ZeroNormaliser {
            context: format!("belief over '{}'", self.graph.variable(v).name),
        })
    }

    fn stats(&self, node: NodeId) -> Result<ObservationStats> {
        let a = self.marginals.param(self.graph.slot_var(node, slot::A));
        let c = self.marginals.param(self.graph.slot_var(node, slot::C));
        ObservationStats::from_beliefs(a, c)
    }

    fn compute_message(&mut self, node: NodeId, s: usize, rule: UpdateRule) -> Result<Array1<f64>> {
        let g = self.graph;
        let n = g.node(node);
        let ctx = || format!("message from '{}'", n.name);
        match (&n.kind, rule) {
            (FactorKind::CategoricalPrior { p }, _) => Ok(p.as_array().clone()),
            (FactorKind::Transition { .. }, _) => {
                let b = self.matrix(node).as_array();
                let m = if s == slot::OUT {
                    b.dot(&self.cavity(g.slot_var(node, slot::IN), Some((node, slot::IN))))
                } else {
                    b.t()
                        .dot(&self.cavity(g.slot_var(node, slot::OUT), Some((node, slot::OUT))))
                };
                normalise(m, &ctx())
            }
            (FactorKind::GoalObservation, UpdateRule::ClampedObservation) => {
                let x = self
                    .constraints
                    .clamp_of(n.edges[slot::X])
                    .expect("clamped rule")
                    .index();
                let gm = self
                    .marginals
                    .param(g.slot_var(node, slot::A))
                    .geometric_mean();
                normalise(gm.row(x).to_owned(), &ctx())
            }
            (FactorKind::GoalObservation, UpdateRule::StructuredObservation) => {
                let gm = self
                    .marginals
                    .param(g.slot_var(node, slot::A))
                    .geometric_mean();
                let c = self
                    .marginals
                    .param(g.slot_var(node, slot::C))
                    .geometric_mean();
                normalise(gm.t().dot(&c.column(0)), &ctx())
            }
            (FactorKind::GoalObservation, UpdateRule::GfeDirect) => {
                let stats = self.stats(node)?;
                let z = self.belief(g.slot_var(node, slot::Z))?;
                let r = rho(&stats, z.as_array())?;
                // ρ diverges on states the other factors rule out; only the
                // cavity's support reaches any belief
                let cav = self.cavity(g.slot_var(node, slot::Z), Some((node, slot::Z)));
                let support: Vec<usize> = (0..cav.len()).filter(|&i| cav[i] > 0.0).collect();
                if support.is_empty() {
                    return Err(Error::ZeroNormaliser { context: ctx() });
                }
                let sub = message_to_state_direct(&support.iter().map(|&i| r[i]).collect())?;
                let mut out = Array1::zeros(r.len());
                for (&i, &p) in support.iter().zip(sub.probs()) {
                    out[i] = p;
                }
                Ok(out)
            }
            (FactorKind::GoalObservation, UpdateRule::GfeIndirect) => {
                let stats = self.stats(node)?;
                let d = ProbVector::normalised(
                    self.cavity(g.slot_var(node, slot::Z), Some((node, slot::Z))),
                )
                .map_err(|_| Error::ZeroNormaliser { context: ctx() })?;
                let out = message_to_state_newton(&d, &stats, &self.config.newton)?;
                self.solver.solves += 1;
                self.solver.fallbacks += usize::from(out.fallback);
                self.solver.max_residual = self.solver.max_residual.max(out.residual);
                Ok(out.message.probs().clone())
            }
            (kind, _) => Err(Error::Model(format!(
                "no message update for {} node '{}'",
                kind.label(),
                n.name
            ))),
        }
    }

    /// Categorical beliefs and joint node beliefs from the current messages.
    fn refresh_categoricals(&mut self) -> Result<()> {
        let g = self.graph;
        for i in 0..g.variables().len() {
            let v = VarId(i);
            if matches!(g.variable(v).kind, EdgeKind::Categorical { .. }) {
                let is_internal = g.variable(v).factors.iter().all(|&(n, s)| {
                    matches!(g.node(n).kind, FactorKind::GoalObservation) && s == slot::X
                });
                if is_internal && !is_fixed(g, &self.constraints, v) {
                    continue;
                }
                self.marginals.vars[i] = VarBelief::Categorical(self.belief(v)?);
            }
        }
        for (i, n) in g.nodes().iter().enumerate() {
            let id = NodeId(i);
            match n.kind {
                FactorKind::Transition { .. } => {
                    let b = self.matrix(id).as_array();
                    let co = self.cavity(g.slot_var(id, slot::OUT), Some((id, slot::OUT)));
                    let ci = self.cavity(g.slot_var(id, slot::IN), Some((id, slot::IN)));
                    let mut j = b.clone();
                    for ((o, k), x) in j.indexed_iter_mut() {
                        *x *= co[o] * ci[k];
                    }
                    let s = j.sum();
                    if s <= 0.0 {
                        return Err(Error::ZeroNormaliser {
                            context: format!("joint belief of '{}'", n.name),
                        });
                    }
                    j /= s;
                    self.marginals.joints.insert(id, j);
                }
                FactorKind::GoalObservation => {
                    let xv = g.slot_var(id, slot::X);
                    let zv = g.slot_var(id, slot::Z);
                    if self.constraints.is_substituted(id) {
                        self.predict_outcome(id)?;
                    } else if self.constraints.clamp_of(n.edges[slot::X]).is_none() {
                        let gm = self
                            .marginals
                            .param(g.slot_var(id, slot::A))
                            .geometric_mean();
                        let c = self
                            .marginals
                            .param(g.slot_var(id, slot::C))
                            .geometric_mean();
                        let cz = self.cavity(zv, Some((id, slot::Z)));
                        let mut j = gm;
                        for ((x, k), v) in j.indexed_iter_mut() {
                            *v *= c[[x, 0]] * cz[k];
                        }
                        let s = j.sum();
                        if s <= 0.0 {
                            return Err(Error::ZeroNormaliser {
                                context: format!("joint belief of '{}'", n.name),
                            });
                        }
                        j /= s;
                        let qx = j.sum_axis(ndarray::Axis(1));
                        self.marginals.vars[xv.0] =
                            VarBelief::Categorical(ProbVector::normalised(qx)?);
                        self.marginals.joints.insert(id, j);
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Combined Dirichlet prior on a parameter variable.
    fn parameter_prior(&self, v: VarId) -> Result<Dirichlet> {
        let g = self.graph;
        let EdgeKind::Parameter { rows, cols } = g.variable(v).kind else {
            unreachable!("parameter variable expected")
        };
        let mut alpha: Option<Array2<f64>> = None;
        for &(n, _) in &g.variable(v).factors {
            if let FactorKind::DirichletPrior { prior } = &g.node(n).kind {
                alpha = Some(match alpha {
                    None => prior.alpha().clone(),
                    Some(a) => a + prior.alpha() - 1.0,
                });
            }
        }
        Dirichlet::new(alpha.unwrap_or_else(|| Array2::ones((rows, cols))))
    }

    fn refresh_parameter(&mut self, v: VarId) -> Result<()> {
        let g = self.graph;
        let prior = self.parameter_prior(v)?;
        let mut counts = Array2::zeros(prior.alpha().dim());
        let mut log_msg: Option<LogMessage> = None;
        for &(n, s) in &g.variable(v).factors {
            if !matches!(g.node(n).kind, FactorKind::GoalObservation) {
                continue;
            }
            let node = g.node(n);
            let z = categorical_belief(
                g,
                &self.constraints,
                &self.marginals,
                g.slot_var(n, slot::Z),
            )
            .into_array();
            let clamp = self.constraints.clamp_of(node.edges[slot::X]);
            match s {
                slot::A => {
                    if self.constraints.is_substituted(n) {
                        let lm = log_message_to_matrix(&self.stats(n)?, &z)?;
                        match &mut log_msg {
                            Some(acc) => acc.accumulate(&lm)?,
                            None => log_msg = Some(lm),
                        }
                    } else if let Some(x) = clamp {
                        let mut row = counts.row_mut(x.index());
                        row += &z;
                    } else {
                        counts += &self.marginals.joints[&n];
                    }
                }
                slot::C => {
                    let mut col = counts.column_mut(0);
                    if self.constraints.is_substituted(n) {
                        let a_bar = self.marginals.param(g.slot_var(n, slot::A)).mean();
                        col += &a_bar.dot(&z);
                    } else if let Some(x) = clamp {
                        col[x.index()] += 1.0;
                    } else {
                        col += &self.marginals.joints[&n].sum_axis(ndarray::Axis(1));
                    }
                }
                _ => {}
            }
        }
        let proposal = prior.add_counts(&counts)?;
        let belief = match log_msg {
            Some(lm) => ParamBelief::Sampled(importance_expectations(
                &proposal,
                &lm,
                self.config.importance_samples,
                &mut self.rng,
            )?),
            None => ParamBelief::Dirichlet(proposal),
        };
        self.marginals.vars[v.0] = VarBelief::Param(belief);
        Ok(())
    }

    /// One pass of the schedule followed by parameter refreshes.
    pub fn sweep(&mut self) -> Result<()> {
        for k in 0..self.schedule.steps.len() {
            let st = self.schedule.steps[k];
            let m = self.compute_message(st.node, st.slot, st.rule)?;
            self.messages[st.node.0][st.slot] = Some(m);
        }
        self.refresh_categoricals()?;
        for k in 0..self.schedule.parameters.len() {
            let v = self.schedule.parameters[k];
            self.refresh_parameter(v)?;
        }
        if !self.schedule.parameters.is_empty() {
            for id in self.graph.goal_observation_nodes() {
                if self.constraints.is_substituted(id) {
                    self.predict_outcome(id)?;
                }
            }
        }
        Ok(())
    }

    /// q(x) = Cat(x | Ā z̄) at a substituted node.
    fn predict_outcome(&mut self, node: NodeId) -> Result<()> {
        let g = self.graph;
        let a_bar = self.marginals.param(g.slot_var(node, slot::A)).mean();
        let z = self
            .marginals
            .categorical(g.slot_var(node, slot::Z))
            .as_array();
        self.marginals.vars[g.slot_var(node, slot::X).0] =
            VarBelief::Categorical(ProbVector::normalised(a_bar.dot(z))?);
        Ok(())
    }

    pub fn free_energy(&self) -> Result<FreeEnergyBreakdown> {
        bethe_free_energy(
            self.graph,
            &self.constraints,
            &self.marginals,
            &self.controls,
        )
    }

    /// Runs `n` sweeps and returns the free energy after each, in bits.
    pub fn run(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut trace = Vec::with_capacity(n);
        for _ in 0..n {
            self.sweep()?;
            trace.push(nats_to_bits(self.free_energy()?.total));
        }
        Ok(trace)
    }

    /// Point-mass parameter value, when the graph fixes one.
    pub fn point_mass(&self, v: VarId) -> Option<&Array2<f64>> {
        match self.graph.point_mass_of(v) {
            Some(PointValue::Matrix(m)) => Some(m),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests;

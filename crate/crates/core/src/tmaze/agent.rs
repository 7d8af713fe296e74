use ndarray::Array2;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{Environment, Observation};
use super::model::{build_agent_model, ModelParts, ParamPrior};
use super::{Outcome, Position};
use crate::dist::OneHot;
use crate::engine::{
    enumerate_policies, evaluate_policies, learn, select_policy, EngineConfig, PolicyEvaluation,
};
use crate::error::{Error, Result};
use crate::graph::{
    apply_time_dependent_constraints, build_graph, ConstraintSet, FactorGraph, Marginals,
    ParamBelief,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// p-substituted future observations: generalised free energy.
    Gfe,
    /// Plain beads everywhere: Bethe free energy.
    Bfe,
}

impl AgentKind {
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Gfe => "gfe",
            AgentKind::Bfe => "bfe",
        }
    }
}

/// An agent: model ingredients carried across trials plus its objective.
#[derive(Clone, Debug)]
pub struct Agent {
    pub kind: AgentKind,
    pub parts: ModelParts,
    pub engine: EngineConfig,
    rng: ChaCha8Rng,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub reward_arm: String,
    /// Chosen move per time.
    pub actions: Vec<Position>,
    /// Position actually reached per time (differs from the choice on a forced return).
    pub positions: Vec<Position>,
    pub observations: Vec<Observation>,
    pub win: bool,
    /// Minimum policy score at t = 1..T, then the free energy of the learning pass, in bits.
    pub min_gfe: Vec<f64>,
    /// Scores of all policies considered at each time, in bits.
    pub policy_scores: Vec<Vec<f64>>,
    /// Total Dirichlet mass of the learned parameters after the trial.
    pub posterior_mass: f64,
    /// Wall-clock time of the trial.
    pub elapsed_ms: f64,
}

impl Agent {
    pub fn new(kind: AgentKind, parts: ModelParts, engine: EngineConfig, rng: ChaCha8Rng) -> Self {
        Self {
            kind,
            parts,
            engine,
            rng,
        }
    }

    fn objective(&self, c: ConstraintSet) -> ConstraintSet {
        match self.kind {
            AgentKind::Gfe => c,
            AgentKind::Bfe => c.without_substitutions(),
        }
    }

    /// Scores every continuation of `executed` at time `t` given the
    /// observations so far.
    pub fn deliberate(
        &mut self,
        graph: &FactorGraph,
        t: usize,
        executed: &[usize],
        observations: &[OneHot],
    ) -> Result<Vec<PolicyEvaluation>> {
        let constraints = self.objective(apply_time_dependent_constraints(graph, t, observations)?);
        let remaining = self.parts.horizon() - executed.len();
        let policies = enumerate_policies(&vec![self.parts.b.len(); remaining]);
        let seed = self.rng.next_u64();
        evaluate_policies(graph, &constraints, executed, &policies, &self.engine, seed)
    }

    /// Learning pass with every observation clamped; the posteriors become the
    /// priors of the next trial. Returns the final free energy in bits.
    pub fn learn(
        &mut self,
        graph: &FactorGraph,
        executed: &[usize],
        observations: &[OneHot],
    ) -> Result<f64> {
        let constraints =
            apply_time_dependent_constraints(graph, self.parts.horizon() + 1, observations)?;
        let seed = self.rng.next_u64();
        let out = learn(graph, &constraints, executed, &self.engine, seed)?;
        self.absorb(graph, &out.marginals)?;
        out.trace.last().copied().ok_or(Error::NoConvergence {
            iterations: 0,
            residual: f64::NAN,
        })
    }

    fn absorb(&mut self, graph: &FactorGraph, m: &Marginals) -> Result<()> {
        let posterior = |name: &str| -> Result<Array2<f64>> {
            let v = graph
                .var_id(name)
                .ok_or_else(|| Error::Model(format!("agent model lacks edge '{name}'")))?;
            match m.param(v) {
                ParamBelief::Dirichlet(d) => Ok(d.alpha().clone()),
                other => Err(Error::Model(format!(
                    "learning pass left '{name}' without a Dirichlet posterior ({other:?})"
                ))),
            }
        };
        if let ParamPrior::Dirichlet(_) = self.parts.a {
            self.parts.a = ParamPrior::Dirichlet(posterior("A")?);
        }
        for k in 0..self.parts.goals.len() {
            if let ParamPrior::Dirichlet(_) = self.parts.goals[k] {
                self.parts.goals[k] = ParamPrior::Dirichlet(posterior(&format!("c{}", k + 1))?);
            }
        }
        Ok(())
    }

    /// Total Dirichlet mass of the learned parameters.
    pub fn learned_mass(&self) -> f64 {
        let mass = |p: &ParamPrior| match p {
            ParamPrior::Dirichlet(a) => a.sum(),
            ParamPrior::PointMass(_) => 0.0,
        };
        mass(&self.parts.a) + self.parts.goals.iter().map(mass).sum::<f64>()
    }
}

/// One perception-action-learning trial: deliberate, act and observe for each
/// move, then learn with everything clamped.
pub fn run_trial(agent: &mut Agent, env: &mut Environment, trial: usize) -> Result<TrialRecord> {
    let start = std::time::Instant::now();
    let spec = build_agent_model(&agent.parts)?;
    let (graph, _) = build_graph(&spec)?;
    let state = env.reset();
    let horizon = agent.parts.horizon();
    let n_obs = agent.parts.outcomes();

    let mut executed = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut positions = Vec::with_capacity(horizon);
    let mut observations = Vec::with_capacity(horizon);
    let mut clamps = Vec::with_capacity(horizon);
    let mut min_gfe = Vec::with_capacity(horizon + 1);
    let mut policy_scores = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let evals = agent.deliberate(&graph, t, &executed, &clamps)?;
        let best = select_policy(&evals, None)?;
        min_gfe.push(evals[best].score);
        policy_scores.push(evals.iter().map(|e| e.score).collect::<Vec<_>>());
        let action = Position::from_index(evals[best].policy.controls[0])?;
        let obs = env.step(action);
        actions.push(action);
        positions.push(obs.position);
        executed.push(obs.position.index());
        clamps.push(OneHot::new(obs.index(), n_obs)?);
        observations.push(obs);
    }
    min_gfe.push(agent.learn(&graph, &executed, &clamps)?);
    let win = observations.iter().any(|o| o.outcome == Outcome::RW);
    Ok(TrialRecord {
        trial,
        reward_arm: state.reward_arm.label().to_string(),
        actions,
        positions,
        observations,
        win,
        min_gfe,
        policy_scores,
        posterior_mass: agent.learned_mass(),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

use ndarray::{Array1, Array2};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agent::{run_trial, Agent, AgentKind, TrialRecord};
use super::env::{stream_rng, Environment};
use super::model::{ModelParts, ParamPrior};
use super::{
    goal_prior, goal_vector, initial_state, observation_matrix, observation_prior,
    transition_matrices, HORIZON,
};
use crate::engine::EngineConfig;
use crate::error::{Error, Result};

const ENV_STREAM: u64 = 0;
const AGENT_STREAM: u64 = 1;
const RUN_STREAM: u64 = 2;

/// Task and agent settings shared by the T-maze experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmazeSettings {
    /// Reward probability on the correct arm.
    pub alpha: f64,
    /// Reward utility c.
    pub utility: f64,
    /// Small prior statistic ε.
    pub epsilon: f64,
    pub engine: EngineConfig,
}

impl Default for TmazeSettings {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            utility: 2.0,
            epsilon: 0.1,
            engine: EngineConfig::default(),
        }
    }
}

impl TmazeSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha {} outside (0, 1]",
                self.alpha
            )));
        }
        if !self.utility.is_finite() {
            return Err(Error::Config("utility must be finite".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        self.engine.validate()
    }

    fn goals(&self) -> Vec<ParamPrior> {
        let c = goal_vector(self.utility).into_array();
        let col = c
            .into_shape_with_order((super::OBSERVATIONS, 1))
            .expect("column");
        vec![ParamPrior::PointMass(col); HORIZON]
    }

    /// A learner starting from A₀.
    pub fn learning_parts(&self) -> ModelParts {
        ModelParts {
            d: initial_state(),
            b: transition_matrices(),
            a: ParamPrior::Dirichlet(observation_prior(self.epsilon)),
            goals: self.goals(),
        }
    }

    /// The reference agent that knows Â(α).
    pub fn known_parts(&self) -> ModelParts {
        ModelParts {
            a: ParamPrior::PointMass(observation_matrix(self.alpha)),
            ..self.learning_parts()
        }
    }

    /// Known Â(α) with Dirichlet goal hyper-priors.
    pub fn goal_learning_parts(&self) -> ModelParts {
        let c0 = goal_prior(self.epsilon)
            .into_shape_with_order((super::OBSERVATIONS, 1))
            .expect("column");
        ModelParts {
            goals: vec![ParamPrior::Dirichlet(c0); HORIZON],
            ..self.known_parts()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub agent: AgentKind,
    pub records: Vec<TrialRecord>,
    pub prior: Array2<f64>,
    pub posterior: Array2<f64>,
}

impl ExperimentResult {
    /// A_S − A₀
    pub fn reinforced(&self) -> Array2<f64> {
        &self.posterior - &self.prior
    }
}

fn run_trials(
    mut agent: Agent,
    env: &mut Environment,
    trials: usize,
    records: &mut Vec<TrialRecord>,
) -> Result<Agent> {
    for s in 1..=trials {
        records.push(run_trial(&mut agent, env, s)?);
    }
    Ok(agent)
}

/// `trials` chained trials of one agent; learned parameters carry over.
/// On failure the trials completed so far are returned with the error.
pub fn run_experiment(
    settings: &TmazeSettings,
    trials: usize,
    kind: AgentKind,
    seed: u64,
) -> std::result::Result<ExperimentResult, (Vec<TrialRecord>, Error)> {
    settings.validate().map_err(|e| (vec![], e))?;
    let parts = settings.learning_parts();
    let prior = parts.a.statistics().clone();
    let agent = Agent::new(kind, parts, settings.engine, stream_rng(seed, AGENT_STREAM));
    let mut env = Environment::new(settings.alpha, stream_rng(seed, ENV_STREAM));
    let mut records = Vec::with_capacity(trials);
    match run_trials(agent, &mut env, trials, &mut records) {
        Ok(agent) => Ok(ExperimentResult {
            agent: kind,
            records,
            prior,
            posterior: agent.parts.a.statistics().clone(),
        }),
        Err(e) => Err((records, e)),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateResult {
    pub runs: usize,
    pub trials: usize,
    /// Per run, the learning agent's trials.
    pub learner: Vec<Vec<TrialRecord>>,
    /// Per run, the known-A reference agent's trials in the same environment.
    pub ideal: Vec<Vec<TrialRecord>>,
}

impl AggregateResult {
    pub fn wins_per_run(&self) -> Vec<usize> {
        wins_per_run(&self.learner)
    }

    pub fn ideal_wins_per_run(&self) -> Vec<usize> {
        wins_per_run(&self.ideal)
    }

    /// Win fraction per trial across runs.
    pub fn win_mean(&self) -> Vec<f64> {
        win_mean(&self.learner, self.trials)
    }

    pub fn ideal_win_mean(&self) -> Vec<f64> {
        win_mean(&self.ideal, self.trials)
    }
}

fn wins_per_run(runs: &[Vec<TrialRecord>]) -> Vec<usize> {
    runs.iter()
        .map(|r| r.iter().filter(|t| t.win).count())
        .collect()
}

fn win_mean(runs: &[Vec<TrialRecord>], trials: usize) -> Vec<f64> {
    (0..trials)
        .map(|s| {
            if runs.is_empty() {
                0.0
            } else {
                runs.iter().filter(|r| r[s].win).count() as f64 / runs.len() as f64
            }
        })
        .collect()
}

fn run_seeds(seed: u64, runs: usize) -> Vec<u64> {
    let mut rng = stream_rng(seed, RUN_STREAM);
    (0..runs).map(|_| rng.next_u64()).collect()
}

fn chained(
    parts: ModelParts,
    settings: &TmazeSettings,
    trials: usize,
    seed: u64,
) -> (Vec<TrialRecord>, Option<Error>) {
    let agent = Agent::new(
        AgentKind::Gfe,
        parts,
        settings.engine,
        stream_rng(seed, AGENT_STREAM),
    );
    let mut env = Environment::new(settings.alpha, stream_rng(seed, ENV_STREAM));
    let mut records = Vec::with_capacity(trials);
    let err = run_trials(agent, &mut env, trials, &mut records).err();
    (records, err)
}

/// `runs` independent GFE learners over `trials` trials each, next to the
/// known-A reference agent facing the same environments. Runs execute in
/// parallel; each owns a seed drawn from `seed`. On failure the runs that
/// completed are returned with the first error.
#[allow(clippy::result_large_err)]
pub fn run_aggregate(
    settings: &TmazeSettings,
    runs: usize,
    trials: usize,
    seed: u64,
) -> std::result::Result<AggregateResult, (AggregateResult, Error)> {
    let mut out = AggregateResult {
        runs,
        trials,
        learner: vec![],
        ideal: vec![],
    };
    if let Err(e) = settings.validate() {
        return Err((out, e));
    }
    let seeds = run_seeds(seed, runs);
    let results: Vec<_> = seeds
        .par_iter()
        .map(|&s| {
            (
                chained(settings.learning_parts(), settings, trials, s),
                chained(settings.known_parts(), settings, trials, s),
            )
        })
        .collect();
    let mut first_err = None;
    for ((learner, e1), (ideal, e2)) in results {
        match e1.or(e2) {
            None => {
                out.learner.push(learner);
                out.ideal.push(ideal);
            }
            Some(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        None => Ok(out),
        Some(e) => Err((out, e)),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GoalLearningResult {
    pub records: Vec<TrialRecord>,
    /// c_{k,0} per time.
    pub prior: Vec<Array1<f64>>,
    /// c_{k,s} − c_{k,0} after each trial s, per time k.
    pub reinforced: Vec<Vec<Array1<f64>>>,
}

/// Known observation model, learned goal statistics.
pub fn run_goal_learning(
    settings: &TmazeSettings,
    trials: usize,
    seed: u64,
) -> std::result::Result<GoalLearningResult, (Vec<TrialRecord>, Error)> {
    settings.validate().map_err(|e| (vec![], e))?;
    let parts = settings.goal_learning_parts();
    let prior: Vec<Array1<f64>> = parts
        .goals
        .iter()
        .map(|g| g.statistics().column(0).to_owned())
        .collect();
    let mut agent = Agent::new(
        AgentKind::Gfe,
        parts,
        settings.engine,
        stream_rng(seed, AGENT_STREAM),
    );
    let mut env = Environment::new(settings.alpha, stream_rng(seed, ENV_STREAM));
    let mut records = Vec::with_capacity(trials);
    let mut reinforced = Vec::with_capacity(trials);
    for s in 1..=trials {
        match run_trial(&mut agent, &mut env, s) {
            Ok(r) => records.push(r),
            Err(e) => return Err((records, e)),
        }
        reinforced.push(
            agent
                .parts
                .goals
                .iter()
                .zip(&prior)
                .map(|(g, p)| &g.statistics().column(0) - p)
                .collect(),
        );
    }
    Ok(GoalLearningResult {
        records,
        prior,
        reinforced,
    })
}

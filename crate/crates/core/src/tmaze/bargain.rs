//! Two nested agents. A seller offers the buyer the cue for a share of the
//! reward probability; the buyer accepts by visiting C during its T-maze
//! trial. The seller learns how its offers are received.

use ndarray::{array, concatenate, Array1, Array2, Axis};
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{run_trial, Agent, AgentKind, TrialRecord};
use super::env::{stream_rng, Environment};
use super::model::{ModelParts, ParamPrior};
use super::{
    goal_vector, initial_state, observation_matrix, position_transition, Position, ARMS,
    OBSERVATIONS,
};
use crate::dist::{kronecker, kronecker_matrix, softmax, ProbVector, TransitionMatrix};
use crate::engine::{
    evaluate_policy, learn, select_policy, EngineConfig, Policy, PolicyEvaluation,
};
use crate::error::{Error, Result};
use crate::graph::spec::{matrix_to_rows, EdgeSpec, FactorSpec, ModelSpec};
use crate::graph::{build_graph, ConstraintSet};

const ENV_STREAM: u64 = 0;
const BUYER_STREAM: u64 = 1;
const SELLER_STREAM: u64 = 3;

/// Seller outcome: the buyer visited the cue (accepted) or not.
pub const CV: usize = 0;
pub const NC: usize = 1;

/// Default reward shares the seller may offer.
pub const OFFER_LEVELS: [f64; 5] = [0.8, 0.85, 0.9, 0.95, 1.0];

/// Buyer model for offer `alpha_s`: states (CV, NC) × position × arm, starting
/// in NC; moving to C switches to CV, where the reward probability is the
/// offer instead of 1.
pub fn buyer_parts(alpha_s: f64, utility: f64) -> ModelParts {
    let d = kronecker(&array![0.0, 1.0], initial_state().as_array());
    let a = concatenate![
        Axis(1),
        observation_matrix(alpha_s),
        observation_matrix(1.0)
    ];
    let switch = array![[1.0, 1.0], [0.0, 0.0]];
    let b = Position::ALL
        .iter()
        .map(|&u| {
            let pos = kronecker_matrix(&position_transition(u), &Array2::eye(ARMS));
            let bargain = if u == Position::C {
                switch.clone()
            } else {
                Array2::eye(2)
            };
            TransitionMatrix::new(kronecker_matrix(&bargain, &pos))
                .expect("column-stochastic by construction")
        })
        .collect();
    let c = goal_vector(utility)
        .into_array()
        .into_shape_with_order((OBSERVATIONS, 1))
        .expect("column");
    ModelParts {
        d: ProbVector::new(d).expect("normalised by construction"),
        b,
        a: ParamPrior::PointMass(a),
        goals: vec![ParamPrior::PointMass(c); super::HORIZON],
    }
}

/// The seller: a Dirichlet belief over how each offer level is received.
#[derive(Clone, Debug)]
pub struct Seller {
    pub levels: Vec<f64>,
    /// Dirichlet statistics of A′ (2 × L).
    pub a: Array2<f64>,
    pub utility: f64,
    pub engine: EngineConfig,
    rng: ChaCha8Rng,
}

impl Seller {
    pub fn new(
        levels: Vec<f64>,
        epsilon: f64,
        utility: f64,
        engine: EngineConfig,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if levels.is_empty() || levels.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
            return Err(Error::Config("offer levels must lie in (0, 1]".into()));
        }
        Ok(Self {
            a: Array2::from_elem((2, levels.len()), epsilon),
            levels,
            utility,
            engine,
            rng,
        })
    }

    /// Goal statistic σ((1 − α)(c, −c)): low offers make acceptance more attractive.
    pub fn goal(&self, level: usize) -> Array1<f64> {
        let s = 1.0 - self.levels[level];
        softmax(&array![s * self.utility, -s * self.utility])
            .expect("finite logits")
            .into_array()
    }

    fn model(&self, level: usize, observed: Option<usize>) -> ModelSpec {
        let l = self.levels.len();
        let edge = |name: &str, dim| EdgeSpec::Categorical {
            name: name.into(),
            dim,
        };
        let mut spec = ModelSpec {
            edges: vec![
                edge("x", 2),
                edge("offer", l),
                EdgeSpec::Parameter {
                    name: "A".into(),
                    rows: 2,
                    cols: l,
                },
                EdgeSpec::Parameter {
                    name: "c".into(),
                    rows: 2,
                    cols: 1,
                },
            ],
            factors: vec![
                FactorSpec::GoalObservation {
                    name: "obs".into(),
                    edges: vec!["x".into(), "offer".into(), "A".into(), "c".into()],
                },
                FactorSpec::PointMass {
                    name: "offer_value".into(),
                    edges: vec!["offer".into()],
                    index: Some(level),
                    matrix: None,
                },
                FactorSpec::DirichletPrior {
                    name: "A_prior".into(),
                    edges: vec!["A".into()],
                    alpha: matrix_to_rows(&self.a),
                },
                FactorSpec::PointMass {
                    name: "c_value".into(),
                    edges: vec!["c".into()],
                    index: None,
                    matrix: Some(self.goal(level).iter().map(|&p| vec![p]).collect()),
                },
            ],
            constraints: Default::default(),
        };
        match observed {
            Some(x) => {
                spec.constraints.clamps.insert("x".into(), x);
            }
            None => spec.constraints.substitutions.push("obs".into()),
        }
        spec
    }

    /// Scores every offer level by its generalised free energy.
    pub fn evaluate_offers(&mut self) -> Result<Vec<PolicyEvaluation>> {
        let seed = self.rng.next_u64();
        (0..self.levels.len())
            .map(|l| {
                let mut e = seller_offer_gfe(self, l, seed ^ l as u64)?;
                e.policy = Policy { controls: vec![l] };
                Ok(e)
            })
            .collect()
    }

    /// Learns from the buyer's response to offer `level`.
    pub fn observe(&mut self, level: usize, response: usize) -> Result<()> {
        let (graph, constraints) = build_graph(&self.model(level, Some(response)))?;
        let seed = self.rng.next_u64();
        let out = learn(&graph, &constraints, &[], &self.engine, seed)?;
        let v = graph.var_id("A").expect("seller model has A");
        self.a = out
            .marginals
            .param(v)
            .as_dirichlet()
            .ok_or_else(|| Error::Model("seller posterior is not Dirichlet".into()))?
            .alpha()
            .clone();
        Ok(())
    }
}

/// Generalised free energy of one offer, averaged after burn-in.
pub fn seller_offer_gfe(seller: &Seller, level: usize, seed: u64) -> Result<PolicyEvaluation> {
    if level >= seller.levels.len() {
        return Err(Error::Model(format!("offer level {level} out of range")));
    }
    let (graph, constraints): (_, ConstraintSet) = build_graph(&seller.model(level, None))?;
    evaluate_policy(
        &graph,
        &constraints,
        &[],
        &Policy { controls: vec![] },
        &seller.engine,
        seed,
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BargainState {
    pub offer_index: usize,
    /// Reward share α_s left to the buyer on acceptance.
    pub offer: f64,
    pub accepted: bool,
    /// Seller Dirichlet statistics after learning from this trial.
    pub seller_posterior: Array2<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BargainRecord {
    pub trial: usize,
    pub state: BargainState,
    /// Seller GFE per offer level, in bits.
    pub offer_gfe: Vec<f64>,
    pub buyer: TrialRecord,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BargainResult {
    pub levels: Vec<f64>,
    pub records: Vec<BargainRecord>,
}

impl BargainResult {
    /// Acceptance rate per level over all trials; `None` for levels never offered.
    pub fn acceptance_rates(&self) -> Vec<Option<f64>> {
        (0..self.levels.len())
            .map(|l| {
                let offered: Vec<bool> = self
                    .records
                    .iter()
                    .filter(|r| r.state.offer_index == l)
                    .map(|r| r.state.accepted)
                    .collect();
                (!offered.is_empty())
                    .then(|| offered.iter().filter(|&&a| a).count() as f64 / offered.len() as f64)
            })
            .collect()
    }
}

/// Nested perception-action cycle over `trials` trials.
pub fn run_bargaining(
    levels: &[f64],
    utility: f64,
    epsilon: f64,
    engine: EngineConfig,
    trials: usize,
    seed: u64,
) -> std::result::Result<BargainResult, (Vec<BargainRecord>, Error)> {
    let mut seller = Seller::new(
        levels.to_vec(),
        epsilon,
        utility,
        engine,
        stream_rng(seed, SELLER_STREAM),
    )
    .map_err(|e| (vec![], e))?;
    engine.validate().map_err(|e| (vec![], e))?;
    let mut buyer_rng = stream_rng(seed, BUYER_STREAM);
    let mut env = Environment::new(1.0, stream_rng(seed, ENV_STREAM));
    let mut records = Vec::with_capacity(trials);
    for s in 1..=trials {
        let step = (|| -> Result<BargainRecord> {
            let evals = seller.evaluate_offers()?;
            let level = select_policy(&evals, None)?;
            let offer = seller.levels[level];
            env.alpha_with_cue = offer;
            env.alpha_without_cue = 1.0;
            let mut buyer = Agent::new(
                AgentKind::Gfe,
                buyer_parts(offer, utility),
                engine,
                stream_rng(buyer_rng.next_u64(), BUYER_STREAM),
            );
            let trial = run_trial(&mut buyer, &mut env, s)?;
            let accepted = trial.positions.contains(&Position::C);
            seller.observe(level, if accepted { CV } else { NC })?;
            Ok(BargainRecord {
                trial: s,
                state: BargainState {
                    offer_index: level,
                    offer,
                    accepted,
                    seller_posterior: seller.a.clone(),
                },
                offer_gfe: evals.iter().map(|e| e.score).collect(),
                buyer: trial,
            })
        })();
        match step {
            Ok(r) => records.push(r),
            Err(e) => return Err((records, e)),
        }
    }
    Ok(BargainResult {
        levels: levels.to_vec(),
        records,
    })
}

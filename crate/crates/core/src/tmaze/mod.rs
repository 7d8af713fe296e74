//! The T-maze task: environment, agent models, the perception-action-learning
//! cycle and the goal-learning and bargaining extensions.
//!
//! Index conventions used throughout:
//!
//! - position: O = 0, L = 1, R = 2, C = 3
//! - reward arm: RL = 0, RR = 1
//! - outcome: CL = 0, CR = 1, RW = 2, NR = 3
//! - state: `position · 2 + arm` (8 states)
//! - observation: `position · 4 + outcome` (16 outcomes)

mod agent;
mod bargain;
mod env;
mod experiments;
mod model;

use ndarray::{array, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dist::{
    block_diagonal, kronecker, kronecker_matrix, softmax, ProbVector, TransitionMatrix,
};
use crate::error::{Error, Result};

pub use agent::{run_trial, Agent, AgentKind, TrialRecord};
pub use bargain::{
    buyer_parts, run_bargaining, seller_offer_gfe, BargainRecord, BargainResult, BargainState,
    Seller, CV, NC, OFFER_LEVELS,
};
pub use env::{env_step, stream_rng, Environment, MazeState, Observation};
pub use experiments::{
    run_aggregate, run_experiment, run_goal_learning, AggregateResult, ExperimentResult,
    GoalLearningResult, TmazeSettings,
};
pub use model::{build_agent_model, ModelParts, ParamPrior};

pub const POSITIONS: usize = 4;
pub const ARMS: usize = 2;
pub const OUTCOMES: usize = 4;
pub const STATES: usize = POSITIONS * ARMS;
pub const OBSERVATIONS: usize = POSITIONS * OUTCOMES;
/// Moves per trial.
pub const HORIZON: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Position {
    O,
    L,
    R,
    C,
}

impl Position {
    pub const ALL: [Position; 4] = [Position::O, Position::L, Position::R, Position::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Model(format!("position index {i} out of range")))
    }

    pub fn label(self) -> &'static str {
        match self {
            Position::O => "O",
            Position::L => "L",
            Position::R => "R",
            Position::C => "C",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RewardArm {
    RL,
    RR,
}

impl RewardArm {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            RewardArm::RL => "RL",
            RewardArm::RR => "RR",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    CL,
    CR,
    RW,
    NR,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::CL, Outcome::CR, Outcome::RW, Outcome::NR];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::CL => "CL",
            Outcome::CR => "CR",
            Outcome::RW => "RW",
            Outcome::NR => "NR",
        }
    }
}

pub fn state_index(p: Position, arm: RewardArm) -> usize {
    p.index() * ARMS + arm.index()
}

pub fn observation_index(p: Position, o: Outcome) -> usize {
    p.index() * OUTCOMES + o.index()
}

/// Outcome probabilities at a position given the reward arm.
pub fn outcome_probabilities(p: Position, arm: RewardArm, alpha: f64) -> [f64; 4] {
    let right = match (p, arm) {
        (Position::L, RewardArm::RL) | (Position::R, RewardArm::RR) => Some(true),
        (Position::L, RewardArm::RR) | (Position::R, RewardArm::RL) => Some(false),
        _ => None,
    };
    match (p, right) {
        (Position::O, _) => [0.5, 0.5, 0.0, 0.0],
        (Position::C, _) => match arm {
            RewardArm::RL => [1.0, 0.0, 0.0, 0.0],
            RewardArm::RR => [0.0, 1.0, 0.0, 0.0],
        },
        (_, Some(true)) => [0.0, 0.0, alpha, 1.0 - alpha],
        (_, _) => [0.0, 0.0, 1.0 - alpha, alpha],
    }
}

/// The true observation matrix Â(α) (16 × 8).
pub fn observation_matrix(alpha: f64) -> Array2<f64> {
    let mut a = Array2::zeros((OBSERVATIONS, STATES));
    for p in Position::ALL {
        for arm in [RewardArm::RL, RewardArm::RR] {
            for (o, &pr) in outcome_probabilities(p, arm, alpha).iter().enumerate() {
                a[[p.index() * OUTCOMES + o, state_index(p, arm)]] = pr;
            }
        }
    }
    a
}

/// Dirichlet prior statistics A₀: uninformative at O, weakly informative
/// elsewhere, ε off the diagonal blocks.
pub fn observation_prior(epsilon: f64) -> Array2<f64> {
    let e = epsilon;
    let o = array![[10.0, 10.0], [10.0, 10.0], [e, e], [e, e]];
    let other = array![[1.0, e], [e, 1.0], [e, e], [e, e]];
    block_diagonal(&[o, other.clone(), other.clone(), other], e)
}

/// Position-level transition for a move to `target`; rows are destinations.
pub fn position_transition(target: Position) -> Array2<f64> {
    let mut b = Array2::zeros((POSITIONS, POSITIONS));
    for from in Position::ALL {
        let to = match (target, from) {
            (Position::O, _) | (_, Position::L) | (_, Position::R) => Position::O,
            (t, _) => t,
        };
        b[[to.index(), from.index()]] = 1.0;
    }
    b
}

/// B_u = B_u(position) ⊗ I₂ for u in (O, L, R, C).
pub fn transition_matrices() -> Vec<TransitionMatrix> {
    Position::ALL
        .iter()
        .map(|&u| {
            TransitionMatrix::new(kronecker_matrix(
                &position_transition(u),
                &Array2::eye(ARMS),
            ))
            .expect("column-stochastic by construction")
        })
        .collect()
}

/// d = e_O ⊗ (½, ½)
pub fn initial_state() -> ProbVector {
    let mut pos = Array1::zeros(POSITIONS);
    pos[0] = 1.0;
    ProbVector::new(kronecker(&pos, &Array1::from_elem(ARMS, 0.5)))
        .expect("normalised by construction")
}

/// Goal statistic σ(1₄ ⊗ (0, 0, c, −c)).
pub fn goal_vector(utility: f64) -> ProbVector {
    let block = array![0.0, 0.0, utility, -utility];
    softmax(&kronecker(&Array1::ones(POSITIONS), &block)).expect("finite logits")
}

/// Dirichlet statistics of the goal hyper-prior, 1₄ ⊗ (ε, ε, 10, ε).
pub fn goal_prior(epsilon: f64) -> Array1<f64> {
    kronecker(
        &Array1::ones(POSITIONS),
        &array![epsilon, epsilon, 10.0, epsilon],
    )
}

#[cfg(test)]
mod tests;

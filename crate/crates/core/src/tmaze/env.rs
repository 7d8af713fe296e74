use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{observation_index, outcome_probabilities, Outcome, Position, RewardArm};

/// Independent stream `stream` of a seeded generator. The environment and the
/// agent draw from different streams so that agent-side sampling never shifts
/// environment outcomes.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MazeState {
    pub position: Position,
    pub reward_arm: RewardArm,
    /// Set after entering an arm; the next move is back to O whatever is chosen.
    pub forced_return: bool,
    pub cue_visited: bool,
}

impl MazeState {
    pub fn start(reward_arm: RewardArm) -> Self {
        Self {
            position: Position::O,
            reward_arm,
            forced_return: false,
            cue_visited: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub position: Position,
    pub outcome: Outcome,
}

impl Observation {
    /// One-hot index over the 16 joint outcomes.
    pub fn index(&self) -> usize {
        observation_index(self.position, self.outcome)
    }

    pub fn label(&self) -> String {
        format!("{}@{}", self.outcome.label(), self.position.label())
    }
}

/// Moves to `action` (or back to O after an arm visit) and samples the outcome
/// at the new position with reward probability `alpha`.
pub fn env_step<R: Rng + ?Sized>(
    state: MazeState,
    action: Position,
    alpha: f64,
    rng: &mut R,
) -> (Observation, MazeState) {
    let position = if state.forced_return {
        Position::O
    } else {
        action
    };
    let probs = outcome_probabilities(position, state.reward_arm, alpha);
    let outcome = Outcome::ALL[WeightedIndex::new(probs)
        .expect("valid outcome row")
        .sample(rng)];
    let next = MazeState {
        position,
        reward_arm: state.reward_arm,
        forced_return: matches!(position, Position::L | Position::R),
        cue_visited: state.cue_visited || position == Position::C,
    };
    (Observation { position, outcome }, next)
}

/// A T-maze with its own random stream. The reward probability may depend on
/// whether the cue was visited during the trial (used for bargaining).
pub struct Environment {
    rng: ChaCha8Rng,
    pub alpha_with_cue: f64,
    pub alpha_without_cue: f64,
    state: MazeState,
}

impl Environment {
    pub fn new(alpha: f64, rng: ChaCha8Rng) -> Self {
        Self::with_cue_price(alpha, alpha, rng)
    }

    pub fn with_cue_price(alpha_with_cue: f64, alpha_without_cue: f64, rng: ChaCha8Rng) -> Self {
        Self {
            rng,
            alpha_with_cue,
            alpha_without_cue,
            state: MazeState::start(RewardArm::RL),
        }
    }

    /// Starts a trial with a uniformly drawn reward arm.
    pub fn reset(&mut self) -> MazeState {
        let arm = if self.rng.random_bool(0.5) {
            RewardArm::RR
        } else {
            RewardArm::RL
        };
        self.state = MazeState::start(arm);
        self.state
    }

    pub fn state(&self) -> MazeState {
        self.state
    }

    pub fn step(&mut self, action: Position) -> Observation {
        let alpha = if self.state.cue_visited {
            self.alpha_with_cue
        } else {
            self.alpha_without_cue
        };
        let (obs, next) = env_step(self.state, action, alpha, &mut self.rng);
        self.state = next;
        obs
    }
}

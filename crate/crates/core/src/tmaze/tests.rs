use ndarray::Array1;

use super::*;
use crate::engine::EngineConfig;
use crate::graph::build_graph;

#[test]
fn table_rows_match_the_task() {
    assert_eq!(
        outcome_probabilities(Position::C, RewardArm::RL, 0.9),
        [1.0, 0.0, 0.0, 0.0]
    );
    assert_eq!(
        outcome_probabilities(Position::O, RewardArm::RR, 0.9),
        [0.5, 0.5, 0.0, 0.0]
    );
    assert_eq!(
        outcome_probabilities(Position::L, RewardArm::RL, 0.9),
        [0.0, 0.0, 0.9, 1.0 - 0.9]
    );
    assert_eq!(
        outcome_probabilities(Position::R, RewardArm::RL, 0.9)[2],
        1.0 - 0.9
    );
    let a = observation_matrix(0.9);
    for col in a.columns() {
        assert!((col.sum() - 1.0).abs() < 1e-15);
    }
}

#[test]
fn prior_blocks_and_fill() {
    let a0 = observation_prior(0.1);
    assert_eq!(a0.dim(), (16, 8));
    assert_eq!(a0[[0, 0]], 10.0);
    assert_eq!(a0[[1, 1]], 10.0);
    assert_eq!(a0[[2, 0]], 0.1);
    // L block
    assert_eq!(a0[[4, 2]], 1.0);
    assert_eq!(a0[[5, 3]], 1.0);
    assert_eq!(a0[[4, 3]], 0.1);
    // off-block
    assert_eq!(a0[[0, 7]], 0.1);
    assert_eq!(a0[[15, 0]], 0.1);
}

#[test]
fn cue_move_keeps_the_reward_marginal() {
    let b = &transition_matrices()[Position::C.index()];
    let from = state_index(Position::O, RewardArm::RR);
    let to = state_index(Position::C, RewardArm::RR);
    assert_eq!(b.as_array()[[to, from]], 1.0);
    // arms always lead back to O
    for u in transition_matrices() {
        let from = state_index(Position::L, RewardArm::RL);
        assert_eq!(
            u.as_array()[[state_index(Position::O, RewardArm::RL), from]],
            1.0
        );
    }
}

#[test]
fn goal_vector_repeats_the_utility_block() {
    let c = goal_vector(2.0);
    let block = crate::dist::softmax(&ndarray::array![0.0, 0.0, 2.0, -2.0]).unwrap();
    for p in 0..4 {
        for o in 0..4 {
            assert!((c.get(p * 4 + o) * 4.0 - block.get(o)).abs() < 1e-15);
        }
    }
    assert!((initial_state().get(0) - 0.5).abs() < 1e-15);
    assert_eq!(goal_prior(0.1)[2], 10.0);
}

#[test]
fn forced_return_overrides_any_action() {
    let mut rng = stream_rng(1, 0);
    for action in Position::ALL {
        let s = MazeState {
            position: Position::L,
            reward_arm: RewardArm::RL,
            forced_return: true,
            cue_visited: false,
        };
        let (obs, next) = env_step(s, action, 0.9, &mut rng);
        assert_eq!(obs.position, Position::O);
        assert!(!next.forced_return);
    }
    let (_, next) = env_step(MazeState::start(RewardArm::RR), Position::R, 0.9, &mut rng);
    assert!(next.forced_return);
}

#[test]
fn agent_model_builds_and_has_two_controls() {
    let settings = TmazeSettings::default();
    let spec = build_agent_model(&settings.learning_parts()).unwrap();
    let (g, _) = build_graph(&spec).unwrap();
    assert_eq!(g.controlled_nodes().len(), 2);
    assert_eq!(g.goal_observation_nodes().len(), 2);
}

#[test]
fn one_trial_adds_two_counts() {
    let settings = TmazeSettings::default();
    let res = run_experiment(&settings, 1, AgentKind::Gfe, 3).unwrap();
    let mass = res.reinforced().sum();
    assert!((mass - 2.0).abs() < 1e-9, "{mass}");
    let r = &res.records[0];
    assert_eq!(
        r.win,
        r.observations.iter().any(|o| o.outcome == Outcome::RW)
    );
}

#[test]
fn known_model_agent_seeks_the_cue_first() {
    let settings = TmazeSettings::default();
    let parts = settings.known_parts();
    let mut agent = Agent::new(AgentKind::Gfe, parts, settings.engine, stream_rng(0, 1));
    let mut env = Environment::new(0.9, stream_rng(0, 0));
    let r = run_trial(&mut agent, &mut env, 1).unwrap();
    assert_eq!(r.actions[0], Position::C);
    let arm = if r.reward_arm == "RL" {
        Position::L
    } else {
        Position::R
    };
    assert_eq!(r.actions[1], arm);
}

#[test]
fn buyer_model_is_well_formed() {
    let parts = buyer_parts(0.7, 2.0);
    assert_eq!(parts.d.len(), 16);
    assert_eq!(parts.d.get(8), 0.5);
    assert_eq!(parts.a.statistics().dim(), (16, 16));
    let spec = build_agent_model(&parts).unwrap();
    build_graph(&spec).unwrap();
}

#[test]
fn seller_goal_is_uniform_at_full_share() {
    let s = Seller::new(
        vec![1.0, 0.5],
        0.1,
        2.0,
        crate::engine::EngineConfig::default(),
        stream_rng(0, 3),
    )
    .unwrap();
    let g: Array1<f64> = s.goal(0);
    assert!((g[0] - 0.5).abs() < 1e-15);
    assert!(s.goal(1)[0] > 0.5);
}

/// Minimum over the reward-arm belief of the two-step free energy of a fixed
/// move sequence, by golden-section search (nats).
fn brute_force_gfe(moves: [Position; 2], alpha: f64, utility: f64) -> f64 {
    let c = goal_vector(utility).into_array();
    let energy = |q: f64| {
        let q = [q, 1.0 - q];
        let mut g: f64 = q.iter().map(|&p| p * (p / 0.5).ln()).sum();
        for &p in &moves {
            let mut qx = [0.0; 4];
            let mut ambiguity = 0.0;
            for (r, arm) in [RewardArm::RL, RewardArm::RR].into_iter().enumerate() {
                let col = outcome_probabilities(p, arm, alpha);
                for o in 0..4 {
                    qx[o] += col[o] * q[r];
                    if col[o] > 0.0 {
                        ambiguity -= q[r] * col[o] * col[o].ln();
                    }
                }
            }
            for o in 0..4 {
                if qx[o] > 0.0 {
                    g += qx[o] * (qx[o].ln() - c[observation_index(p, Outcome::ALL[o])].ln());
                }
            }
            g += ambiguity;
        }
        g
    };
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if energy(a) < energy(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    energy((lo + hi) / 2.0)
}

fn first_move_scores(
    parts: &ModelParts,
    engine: &EngineConfig,
) -> Vec<crate::engine::PolicyEvaluation> {
    let (g, _) = build_graph(&build_agent_model(parts).unwrap()).unwrap();
    let c = crate::graph::apply_time_dependent_constraints(&g, 1, &[]).unwrap();
    let policies = crate::engine::enumerate_policies(&[4, 4]);
    crate::engine::evaluate_policies(&g, &c, &[], &policies, engine, 1).unwrap()
}

#[test]
fn known_model_scores_match_brute_force_minimum() {
    let settings = TmazeSettings::default();
    let evals = first_move_scores(&settings.known_parts(), &settings.engine);
    let score = |u: [usize; 2]| evals.iter().find(|e| e.policy.controls == u).unwrap().score;
    for (moves, u) in [
        ([Position::C, Position::L], [3, 1]),
        ([Position::L, Position::O], [1, 0]),
        ([Position::O, Position::O], [0, 0]),
    ] {
        let oracle = brute_force_gfe(moves, 0.9, 2.0) / std::f64::consts::LN_2;
        assert!(
            (score(u) - oracle).abs() < 1e-6,
            "{u:?}: {} vs {oracle}",
            score(u)
        );
    }
}

#[test]
fn buyer_accepts_only_above_threshold() {
    let engine = EngineConfig::default();
    let best = |alpha_s: f64| {
        let evals = first_move_scores(&buyer_parts(alpha_s, 2.0), &engine);
        evals[crate::engine::select_policy(&evals, None).unwrap()]
            .policy
            .controls[0]
    };
    assert_ne!(best(0.9), Position::C.index());
    assert_eq!(best(0.95), Position::C.index());
}

#[test]
fn direct_state_rule_stays_on_support() {
    let settings = TmazeSettings::default();
    let engine = EngineConfig {
        state_rule: crate::graph::StateMessageRule::Direct,
        ..settings.engine
    };
    let evals = first_move_scores(&settings.known_parts(), &engine);
    assert!(evals.iter().all(|e| e.score.is_finite()));
}

#[test]
fn direct_leaves_are_evaluated_once_per_sweep() {
    let settings = TmazeSettings::default();
    let (g, _) = build_graph(&build_agent_model(&settings.known_parts()).unwrap()).unwrap();
    let c = crate::graph::apply_time_dependent_constraints(&g, 1, &[]).unwrap();
    let count = |rule| {
        let s = crate::graph::Schedule::new(&g, &c, rule).unwrap();
        g.goal_observation_nodes()
            .iter()
            .map(|&n| s.steps.iter().filter(|st| st.node == n).count())
            .collect::<Vec<_>>()
    };
    assert_eq!(count(crate::graph::StateMessageRule::Direct), vec![1, 1]);
    assert_eq!(count(crate::graph::StateMessageRule::Indirect), vec![2, 2]);
}

//! Behavioural and bookkeeping properties of the T-maze simulations.

use proptest::prelude::*;
use statrs::distribution::{DiscreteCDF, Hypergeometric};

use cffg::engine::{evaluate_policy, EngineConfig, Policy};
use cffg::graph::{apply_time_dependent_constraints, build_graph};
use cffg::tmaze::{
    build_agent_model, env_step, run_experiment, AgentKind, MazeState, Position, RewardArm,
    TmazeSettings,
};

fn arm() -> impl Strategy<Value = RewardArm> {
    prop_oneof![Just(RewardArm::RL), Just(RewardArm::RR)]
}

fn position() -> impl Strategy<Value = Position> {
    (0usize..4).prop_map(|i| Position::from_index(i).unwrap())
}

proptest! {
    #[test]
    fn arms_always_return_to_the_origin(
        arm in arm(),
        entered in prop_oneof![Just(Position::L), Just(Position::R)],
        next in position(),
        seed in any::<u64>(),
    ) {
        let mut rng = cffg::tmaze::stream_rng(seed, 0);
        let (_, s) = env_step(MazeState::start(arm), entered, 0.9, &mut rng);
        prop_assert!(s.forced_return);
        let (obs, s) = env_step(s, next, 0.9, &mut rng);
        prop_assert_eq!(obs.position, Position::O);
        prop_assert_eq!(s.position, Position::O);
    }
}

#[test]
fn learning_adds_two_counts_per_trial_and_replays_from_the_seed() {
    let settings = TmazeSettings::default();
    for kind in [AgentKind::Gfe, AgentKind::Bfe] {
        let run = || {
            let mut res = run_experiment(&settings, 4, kind, 21).unwrap();
            for r in &mut res.records {
                r.elapsed_ms = 0.0;
            }
            res
        };
        let (a, b) = (run(), run());
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let prior_mass = a.prior.sum();
        for (s, r) in a.records.iter().enumerate() {
            let added = r.posterior_mass - prior_mass;
            assert!((added - 2.0 * (s + 1) as f64).abs() < 1e-9, "{added}");
        }
        assert!((a.reinforced().sum() - 8.0).abs() < 1e-9);
    }
}

#[test]
fn policy_scores_replay_bit_for_bit() {
    let settings = TmazeSettings::default();
    let (g, _) = build_graph(&build_agent_model(&settings.learning_parts()).unwrap()).unwrap();
    let c = apply_time_dependent_constraints(&g, 1, &[]).unwrap();
    let policy = Policy {
        controls: vec![3, 1],
    };
    let eval = || evaluate_policy(&g, &c, &[], &policy, &EngineConfig::default(), 77).unwrap();
    let (a, b) = (eval(), eval());
    assert_eq!(a.score.to_bits(), b.score.to_bits());
    assert_eq!(a.gfe_trace, b.gfe_trace);
}

#[test]
fn gfe_agent_seeks_the_cue_more_often_than_bfe() {
    let settings = TmazeSettings::default();
    let (trials, first) = (30, 20);
    let cue_visits = |kind| {
        (1..=3)
            .map(|seed| {
                run_experiment(&settings, trials, kind, seed)
                    .unwrap()
                    .records[first..]
                    .iter()
                    .filter(|r| r.positions[0] == Position::C)
                    .count() as u64
            })
            .sum::<u64>()
    };
    let (gfe, bfe) = (cue_visits(AgentKind::Gfe), cue_visits(AgentKind::Bfe));
    let per_agent = 3 * (trials - first) as u64;
    // one-sided Fisher exact test on the 2×2 table of cue visits
    let dist = Hypergeometric::new(2 * per_agent, gfe + bfe, per_agent).unwrap();
    let p = if gfe == 0 { 1.0 } else { dist.sf(gfe - 1) };
    assert!(
        gfe > bfe && p < 0.01,
        "GFE {gfe}, BFE {bfe} of {per_agent}, p = {p}"
    );
}

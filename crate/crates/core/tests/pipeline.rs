use std::path::PathBuf;

use needle_grasp::harness::{run_batch, run_trial, MotionSpec, PoseSpec, ScenarioConfig, TrialRecord, Waypoint};
use needle_grasp::servo::{OutcomeKind, Phase};
use proptest::prelude::*;

fn config(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    ScenarioConfig::load(&path).unwrap()
}

fn static_at(position_mm: [f64; 3], yaw_deg: f64) -> MotionSpec {
    MotionSpec::Static {
        pose: PoseSpec {
            position_mm,
            rpy_deg: [0.0, 0.0, yaw_deg],
        },
    }
}

fn waypoint(t_s: f64, position_mm: [f64; 3]) -> Waypoint {
    Waypoint {
        t_s,
        position_mm,
        rpy_deg: [0.0; 3],
    }
}

fn first_entry(rec: &TrialRecord, phase: Phase) -> Option<f64> {
    rec.transitions.iter().find(|(_, p)| *p == phase).map(|(t, _)| *t)
}

#[test]
fn shipped_configs_load() {
    for name in ["default.json", "calibrated.json", "zero_noise.json", "off_view.json"] {
        let cfg = config(name);
        let again = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again, "{name}");
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let mut v: serde_json::Value = serde_json::from_str(&ScenarioConfig::default().to_json()).unwrap();
    v["servo"]["standof_mm"] = 25.0.into();
    assert!(ScenarioConfig::from_json(&v.to_string()).is_err());
    assert!(ScenarioConfig::from_json(r#"{"sede": 3}"#).is_err());
    assert_eq!(ScenarioConfig::from_json("{}").unwrap(), ScenarioConfig::default());
}

#[test]
fn invalid_values_are_rejected() {
    let mut cfg = ScenarioConfig::default();
    cfg.noise.dropout_prob = 1.5;
    assert!(ScenarioConfig::from_json(&cfg.to_json()).is_err());
    let mut cfg = ScenarioConfig::default();
    cfg.servo.settle_window = 0;
    assert!(ScenarioConfig::from_json(&cfg.to_json()).is_err());
}

#[test]
fn stationary_zero_noise_trial_succeeds() {
    let rec = run_trial(&config("zero_noise.json"), 0, 3).unwrap();
    assert_eq!(rec.outcome.kind, OutcomeKind::Success);
    assert!(rec.outcome.final_tip_error < 0.01);
    assert!(rec.completed);
    let phases: Vec<Phase> = rec.transitions.iter().map(|(_, p)| *p).collect();
    assert_eq!(
        phases,
        [
            Phase::Home,
            Phase::Follow,
            Phase::Approach,
            Phase::Grasp,
            Phase::Return,
            Phase::Done
        ]
    );
    assert_eq!(rec.trace.last().unwrap().outcome, Some(OutcomeKind::Success));
    assert!(rec.trace[..rec.trace.len() - 1].iter().all(|r| r.outcome.is_none()));
}

#[test]
fn scripted_motion_task_time() {
    let cfg = config("calibrated.json");
    for seed in [1, 2, 3] {
        let rec = run_trial(&cfg, 0, seed).unwrap();
        assert!(rec.completed, "seed {seed}: {:?}", rec.abort_reason);
        assert!(
            (5.0..=15.0).contains(&rec.task_time_s),
            "seed {seed}: {}",
            rec.task_time_s
        );
        // The grasp waits for the script to come to rest.
        assert!(first_entry(&rec, Phase::Approach).unwrap() >= 4.5);
    }
}

#[test]
fn needle_out_of_view_aborts_as_fail() {
    let rec = run_trial(&config("off_view.json"), 0, 1).unwrap();
    assert_eq!(rec.outcome.kind, OutcomeKind::Fail);
    assert!(rec.abort_reason.as_deref().unwrap().contains("stale"));
    assert_eq!(rec.transitions.last().unwrap().1, Phase::Aborted);
    assert!(!rec.completed);
}

#[test]
fn teleport_resets_settling_and_tool_reconverges() {
    let mut cfg = config("zero_noise.json");
    cfg.motion = MotionSpec::Waypoints {
        waypoints: vec![
            waypoint(0.0, [0.0, 0.0, 20.0]),
            waypoint(0.6, [0.0, 0.0, 20.0]),
            waypoint(0.601, [10.0, 0.0, 20.0]),
        ],
    };
    let rec = run_trial(&cfg, 0, 1).unwrap();
    assert_eq!(rec.outcome.kind, OutcomeKind::Success);
    assert!(first_entry(&rec, Phase::Approach).unwrap() >= 1.6);
    let standoff = cfg.servo.standoff_mm;
    let row = rec
        .trace
        .iter()
        .rfind(|r| r.t <= 1.601 && r.phase == Phase::Follow)
        .unwrap();
    assert!(row.t > 1.5);
    let gap: Vec<f64> = (0..3).map(|i| row.tip[i] - row.needle_middle[i]).collect();
    assert!(gap[0].abs() < 1.0 && gap[1].abs() < 1.0, "{gap:?}");
    assert!((gap[2] - standoff).abs() < 1.0, "{gap:?}");
}

#[test]
fn standoff_is_held_during_steady_follow() {
    let cfg = config("default.json");
    let rec = run_trial(&cfg, 0, 4).unwrap();
    let approach = first_entry(&rec, Phase::Approach).unwrap();
    let steady: Vec<_> = rec
        .trace
        .iter()
        .filter(|r| r.phase == Phase::Follow && r.t > approach - 0.5)
        .collect();
    assert!(!steady.is_empty());
    for r in steady {
        let dz = r.tip[2] - r.needle_middle[2];
        assert!((dz - cfg.servo.standoff_mm).abs() < 1.0, "t={} dz={dz}", r.t);
    }
}

#[test]
fn moving_needle_never_settles() {
    let mut cfg = config("zero_noise.json");
    // 2 mm/s, twice the settle threshold speed.
    cfg.motion = MotionSpec::Waypoints {
        waypoints: vec![waypoint(0.0, [-8.0, 0.0, 20.0]), waypoint(8.0, [8.0, 0.0, 20.0])],
    };
    let rec = run_trial(&cfg, 0, 1).unwrap();
    assert!(first_entry(&rec, Phase::Approach).unwrap() >= 8.0);
    assert_eq!(rec.outcome.kind, OutcomeKind::Success);
}

#[test]
fn downward_standoff_is_configurable() {
    let mut cfg = config("zero_noise.json");
    cfg.servo.standoff_direction = needle_grasp::servo::StandoffDirection::Down;
    cfg.motion = static_at([0.0, 0.0, 40.0], 0.0);
    let rec = run_trial(&cfg, 0, 1).unwrap();
    let follow = rec.trace.iter().rfind(|r| r.phase == Phase::Follow).unwrap();
    assert!((follow.needle_middle[2] - follow.tip[2] - cfg.servo.standoff_mm).abs() < 1.0);
}

#[test]
fn zero_noise_batch_all_succeed() {
    let mut cfg = config("zero_noise.json");
    cfg.needle.position_jitter_mm = 4.0;
    cfg.needle.yaw_jitter_deg = 30.0;
    let r = run_batch(&cfg, 40).unwrap().report;
    assert_eq!(r.counts.success, 40);
    assert!(r.mean_terminal_error_mm < 0.01);
}

#[test]
fn single_trial_batch_has_degenerate_quartiles() {
    let r = run_batch(&config("calibrated.json"), 1).unwrap().report;
    assert_eq!(r.n_trials, 1);
    for s in [
        r.error_quartiles_mm.unwrap().x,
        r.error_quartiles_mm.unwrap().y,
        r.error_quartiles_mm.unwrap().z,
    ] {
        assert!(s.min == s.q1 && s.q1 == s.median && s.median == s.q3 && s.q3 == s.max);
    }
    assert!(run_batch(&config("calibrated.json"), 0).is_err());
}

#[test]
fn report_counts_match_trial_classifications() {
    let result = run_batch(&config("calibrated.json"), 12).unwrap();
    let r = &result.report;
    assert_eq!(r.counts.success + r.counts.miss + r.counts.fail, r.n_trials);
    for (summary, trial) in r.trials.iter().zip(&result.trials) {
        assert_eq!(summary.outcome, trial.outcome.kind);
        assert_eq!(trial.trace.last().unwrap().outcome, Some(trial.outcome.kind));
    }
    let count = |k| result.trials.iter().filter(|t| t.outcome.kind == k).count();
    assert_eq!(count(OutcomeKind::Success), r.counts.success);
    assert_eq!(count(OutcomeKind::Miss), r.counts.miss);
    for q in [r.error_quartiles_mm.unwrap().x, r.error_quartiles_mm.unwrap().z] {
        assert!(q.min <= q.q1 && q.q1 <= q.median && q.median <= q.q3 && q.q3 <= q.max);
    }
}

#[test]
fn batch_seeds_are_independent_of_thread_scheduling() {
    let cfg = config("calibrated.json");
    let a = run_batch(&cfg, 5).unwrap();
    for t in &a.trials {
        let single = run_trial(&cfg, t.trial_id, t.seed).unwrap();
        assert_eq!(&single, t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn zero_noise_static_poses_converge(x in -6.0..6.0f64, y in -6.0..6.0f64, z in 15.0..25.0f64, yaw in -45.0..45.0f64) {
        let mut cfg = config("zero_noise.json");
        cfg.motion = static_at([x, y, z], yaw);
        let rec = run_trial(&cfg, 0, 1).unwrap();
        prop_assert_eq!(rec.outcome.kind, OutcomeKind::Success);
        prop_assert!(rec.outcome.final_tip_error < 0.01, "{}", rec.outcome.final_tip_error);
        prop_assert!(rec.completed);
    }
}

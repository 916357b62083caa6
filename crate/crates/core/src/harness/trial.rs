//! One end-to-end grasp trial.

use serde::Serialize;

use super::calibration::{estimated_rig, simulate_calibration, CalibReport};
use super::config::ScenarioConfig;
use super::{substream, HarnessError, STREAM_CALIBRATION, STREAM_MOTION, STREAM_TRACKER};
use crate::geometry::Point3;
use crate::kinematics::builtin_ik_solvers;
use crate::perception::{Capsule, NeedleState, SyntheticTracker};
use crate::servo::{classify_outcome, Controller, Outcome, OutcomeKind, Phase};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub trial_id: usize,
    pub t: f64,
    pub phase: Phase,
    /// True tool tip in `/ws`.
    pub tip: [f64; 3],
    /// True middle marker in `/ws`.
    pub needle_middle: [f64; 3],
    /// Servo error as seen by the controller.
    pub error: [f64; 3],
    pub d3: f64,
    /// Set on the final row only.
    pub outcome: Option<OutcomeKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionRow {
    pub trial_id: usize,
    pub t: f64,
    pub marker_id: usize,
    pub u_l: f64,
    pub v_l: f64,
    pub u_r: f64,
    pub v_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub abort_reason: Option<String>,
    /// Reached home again after the grasp.
    pub completed: bool,
    /// Time of the final step (the return home when completed).
    pub task_time_s: f64,
    pub closure_time_s: Option<f64>,
    pub transitions: Vec<(f64, Phase)>,
    pub calibration: CalibReport,
    pub disparity_bias_px: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    #[serde(skip)]
    pub detections: Vec<DetectionRow>,
}

fn arr(p: &Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Runs calibration, then the servo loop against the true scene until the
/// controller finishes or aborts. The controller works with the estimated
/// calibration; the world (tracker, tool, needle) uses the truth.
pub fn run_trial(config: &ScenarioConfig, trial_id: usize, seed: u64) -> Result<TrialRecord, HarnessError> {
    let calibration = simulate_calibration(config, substream(seed, STREAM_CALIBRATION))?;
    let rig_true = config.rig.build()?;
    let chain_true = config.chain.build()?;
    let (chain_est, rig_est) = if config.calibration.enabled {
        (
            chain_true.with_rc_from_ws(calibration.rc_from_ws),
            estimated_rig(&rig_true, &calibration),
        )
    } else {
        (chain_true, rig_true)
    };

    let motion = config.motion.build(substream(seed, STREAM_MOTION), &config.needle)?;
    let needle0 = NeedleState::new(
        motion.pose_at(0.0),
        config.needle.radius_mm,
        config.needle.marker_angles_deg,
    )?;
    let mut tracker = SyntheticTracker::new(config.noise, config.rates, substream(seed, STREAM_TRACKER))?;
    let home = config.chain.home();
    let solvers = builtin_ik_solvers(config.servo.dls);
    let mut controller = Controller::new(
        config.servo.clone(),
        chain_est,
        rig_est,
        home,
        config.rates.tracker_period(),
        &solvers,
    )?;

    let dt = config.rates.control_dt();
    let ws_from_rc = chain_true.rc_from_ws.invert();
    let max_steps = ((config.servo.timeout_s + 1.0) / dt).ceil() as usize;
    let mut q = home;
    let mut trace = Vec::new();
    let mut detections = Vec::new();
    let mut closure: Option<(f64, Outcome)> = None;
    let mut needle = needle0;
    let mut t = 0.0;

    for k in 0..=max_steps {
        t = k as f64 * dt;
        needle = needle0.with_pose(motion.pose_at(t));
        let fk = chain_true.forward_unchecked(&q);
        let tip = ws_from_rc.apply(&fk.tip);
        let occluder = config.occlusion.enabled.then(|| Capsule {
            a: ws_from_rc.apply(&Point3::origin()),
            b: ws_from_rc.apply(&fk.pre_wrist),
            radius: config.occlusion.shaft_radius_mm,
        });
        let frame = tracker.observe(&needle, &rig_true, t, occluder.as_ref());
        if let Some(f) = &frame {
            detections.extend(f.detections.iter().map(|d| DetectionRow {
                trial_id,
                t: d.timestamp,
                marker_id: d.marker_id,
                u_l: d.left_px.u,
                v_l: d.left_px.v,
                u_r: d.right_px.u,
                v_r: d.right_px.v,
            }));
        }
        let out = controller.step(t, frame.as_ref(), &q);
        if out.grip_closed {
            let captured = needle.distance_to_arc(&tip) <= config.outcome.capture_radius_mm;
            closure = Some((t, classify_outcome(&tip, &needle.middle(), captured, &config.outcome)));
        }
        trace.push(TraceRow {
            trial_id,
            t,
            phase: controller.phase(),
            tip: arr(&tip),
            needle_middle: arr(&needle.middle()),
            error: [out.error.x, out.error.y, out.error.z],
            d3: q.d3,
            outcome: None,
        });
        if controller.phase().is_terminal() {
            break;
        }
        q = config.joint_servo.advance(&q, &out.command, dt);
    }

    let final_tip = ws_from_rc.apply(&chain_true.forward_unchecked(&q).tip);
    let aborted = controller.phase() == Phase::Aborted || !controller.phase().is_terminal();
    let mut outcome = match closure {
        Some((_, o)) => o,
        None => classify_outcome(&final_tip, &needle.middle(), false, &config.outcome),
    };
    let abort_reason = if aborted {
        outcome.kind = OutcomeKind::Fail;
        Some(controller.abort_reason().unwrap_or("did not terminate").to_string())
    } else {
        None
    };
    if let Some(last) = trace.last_mut() {
        last.outcome = Some(outcome.kind);
    }
    Ok(TrialRecord {
        trial_id,
        seed,
        outcome,
        abort_reason,
        completed: controller.phase() == Phase::Done,
        task_time_s: t,
        closure_time_s: closure.map(|c| c.0),
        transitions: controller.transitions().to_vec(),
        calibration,
        disparity_bias_px: tracker.disparity_bias(),
        trace,
        detections,
    })
}

//! The grasp task state machine.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::{compute_error, plan_grasp, GraspPlan, Phase, ServoConfig, ServoError};
use crate::camera::StereoRig;
use crate::geometry::{centroid, Point3, RigidTransform};
use crate::kinematics::{IkSolver, JointVector, KinematicChain, KinematicsError};
use crate::perception::{reconstruct_markers, TrackerFrame, MARKER_COUNT, MIDDLE};
use crate::registry::Registry;

/// Grip angle at or below which the jaws count as closed (rad).
const GRIP_CLOSED: f64 = 1e-4;
/// Normalized joint distance at which the arm counts as settled on a
/// command before closing on the needle.
const GRASP_TRACKING_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub command: JointVector,
    /// Servo error in `/ws` (mm) for this step.
    pub error: Vector3<f64>,
    /// Set on the step where the jaws finish closing on the grasp pose.
    pub grip_closed: bool,
}

/// Drives the tool through Home, Follow, Approach, Grasp and Return.
///
/// All geometry is expressed through the *estimated* calibration held in
/// `chain` and `rig`; the controller never sees ground truth.
pub struct Controller {
    config: ServoConfig,
    chain: KinematicChain,
    rig: StereoRig,
    solver: Arc<dyn IkSolver>,
    home: JointVector,
    home_rotation: Matrix3<f64>,
    tracker_period: f64,
    phase: Phase,
    transitions: Vec<(f64, Phase)>,
    command: JointVector,
    last_middle: Option<(f64, Point3)>,
    middle_window: VecDeque<Point3>,
    marker_windows: [VecDeque<Point3>; MARKER_COUNT],
    plan: Option<GraspPlan>,
    legs: Vec<(Point3, JointVector)>,
    leg: usize,
    abort_reason: Option<String>,
    closed_at: Option<f64>,
}

impl Controller {
    pub fn new(
        config: ServoConfig,
        chain: KinematicChain,
        rig: StereoRig,
        home: JointVector,
        tracker_period: f64,
        solvers: &Registry<dyn IkSolver>,
    ) -> Result<Self, ServoError> {
        config.validate()?;
        chain.limits.check(&home)?;
        if !(tracker_period > 0.0) {
            return Err(ServoError::InvalidParameters("tracker period must be positive".into()));
        }
        let solver = solvers.get(&config.ik_solver)?;
        let home_rotation = *chain.forward_unchecked(&home).pose.rotation();
        Ok(Self {
            config,
            chain,
            rig,
            solver,
            home,
            home_rotation,
            tracker_period,
            phase: Phase::Home,
            transitions: vec![(0.0, Phase::Home)],
            command: home,
            last_middle: None,
            middle_window: VecDeque::new(),
            marker_windows: Default::default(),
            plan: None,
            legs: Vec::new(),
            leg: 0,
            abort_reason: None,
            closed_at: None,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Every phase entered, with its entry time.
    pub fn transitions(&self) -> &[(f64, Phase)] {
        &self.transitions
    }

    pub fn plan(&self) -> Option<&GraspPlan> {
        self.plan.as_ref()
    }

    pub fn abort_reason(&self) -> Option<&str> {
        self.abort_reason.as_deref()
    }

    /// Time at which the jaws closed on the grasp pose.
    pub fn closed_at(&self) -> Option<f64> {
        self.closed_at
    }

    pub fn command(&self) -> &JointVector {
        &self.command
    }

    /// Latest middle-marker estimate in `/ws` and its timestamp.
    pub fn last_middle(&self) -> Option<(f64, Point3)> {
        self.last_middle
    }

    /// Tool tip in `/ws` according to the estimated calibration.
    pub fn estimated_tip(&self, q: &JointVector) -> Point3 {
        self.chain
            .rc_from_ws
            .invert()
            .apply(&self.chain.forward_unchecked(q).tip)
    }

    fn enter(&mut self, t: f64, next: Phase) {
        debug_assert!(self.phase.can_transition_to(next), "{} -> {}", self.phase, next);
        log::debug!("t={t:.3}: {} -> {}", self.phase, next);
        self.phase = next;
        self.transitions.push((t, next));
    }

    fn abort(&mut self, t: f64, q: &JointVector, reason: String) {
        log::info!("t={t:.3}: aborting in {}: {reason}", self.phase);
        self.command = *q;
        self.abort_reason = Some(reason);
        self.enter(t, Phase::Aborted);
    }

    fn ingest(&mut self, frame: &TrackerFrame) -> bool {
        let est = reconstruct_markers(&frame.detections, &self.rig);
        let cap = self.config.settle_window + 1;
        for (id, p) in est.positions.iter().enumerate() {
            if let Some(p) = p {
                push_capped(&mut self.marker_windows[id], *p, cap);
            }
        }
        match est.positions[MIDDLE] {
            Some(p) => {
                self.last_middle = Some((frame.timestamp, p));
                push_capped(&mut self.middle_window, p, cap);
                true
            }
            None => false,
        }
    }

    fn settled(&self) -> bool {
        let w = &self.middle_window;
        if w.len() < self.config.settle_window + 1 {
            return false;
        }
        let max = w
            .iter()
            .enumerate()
            .flat_map(|(i, a)| w.iter().skip(i + 1).map(move |b| (a - b).norm()))
            .fold(0.0, f64::max);
        max < self.config.settle_epsilon_mm
    }

    fn solve(&self, target: &RigidTransform, seed: &JointVector) -> Result<JointVector, KinematicsError> {
        match self.solver.solve(&self.chain, target, seed) {
            Ok(sol) => Ok(sol.joints),
            Err(KinematicsError::NoConvergence {
                best, position_error, ..
            }) => {
                log::debug!("IK did not converge, using best iterate ({position_error:.3} mm)");
                Ok(best.with_grip(seed.grip))
            }
            Err(e) => Err(e),
        }
    }

    fn follow_target(&self, middle: &Point3) -> RigidTransform {
        let target_ws = middle + self.config.standoff();
        RigidTransform::from_rotation(
            Rotation3::from_matrix_unchecked(self.home_rotation),
            self.chain.rc_from_ws.apply(&target_ws).coords,
        )
    }

    /// Plans the grasp from the averaged marker windows and the approach
    /// legs: above the grasp point at the standoff, at the final-leg height,
    /// and at the grasp pose.
    fn start_approach(&mut self) -> Result<(), ServoError> {
        let markers: Vec<Point3> = self
            .marker_windows
            .iter()
            .map(|w| centroid(&w.iter().copied().collect::<Vec<_>>()))
            .collect();
        let plan = plan_grasp(
            &markers,
            &self.chain,
            self.config.grip_open_deg.to_radians(),
            self.config.standoff_mm,
            &self.config.dls,
        )?;
        let mut legs = Vec::with_capacity(3);
        for height in [self.config.standoff_mm, self.config.final_leg_mm] {
            let joints = self.solve(&plan.approach_pose(height), &plan.joints)?;
            legs.push((plan.approach_point(height), joints.with_grip(plan.grip_open)));
        }
        legs.push((plan.p_pl, plan.joints));
        self.plan = Some(plan);
        self.legs = legs;
        self.leg = 0;
        Ok(())
    }

    fn tip_rc(&self, q: &JointVector) -> Point3 {
        self.chain.forward_unchecked(q).tip
    }

    /// Advances the controller by one control period ending at `t`.
    ///
    /// `frame` is the tracker output for this period, if any; `q` is the
    /// measured joint state.
    pub fn step(&mut self, t: f64, frame: Option<&TrackerFrame>, q: &JointVector) -> StepOutput {
        let fresh = frame.is_some_and(|f| self.ingest(f));
        let mut grip_closed = false;

        if !self.phase.is_terminal() && t > self.config.timeout_s {
            self.abort(t, q, format!("timeout after {:.1} s", self.config.timeout_s));
        }
        if matches!(self.phase, Phase::Home | Phase::Follow) {
            let max_age = self.config.stale_periods * self.tracker_period;
            let age = t - self.last_middle.map_or(0.0, |(ts, _)| ts);
            if age > max_age + self.config.stale_abort_s {
                let err = ServoError::StaleEstimate { age };
                self.abort(t, q, err.to_string());
            }
        }

        match self.phase {
            Phase::Home => {
                self.command = self.home;
                if fresh {
                    self.enter(t, Phase::Follow);
                    self.follow(t, q);
                }
            }
            Phase::Follow => {
                if fresh {
                    self.follow(t, q);
                }
            }
            Phase::Approach => {
                let (point, joints) = self.legs[self.leg];
                self.command = joints;
                if (self.tip_rc(q) - point).norm() < self.config.leg_tolerance_mm {
                    self.leg += 1;
                    if self.leg == self.legs.len() {
                        self.enter(t, Phase::Grasp);
                        self.command = joints.with_grip(0.0);
                    } else {
                        self.command = self.legs[self.leg].1;
                    }
                }
            }
            Phase::Grasp => {
                let target = self.legs[self.legs.len() - 1].1.with_grip(0.0);
                self.command = target;
                if q.grip <= GRIP_CLOSED && q.arm_distance(&target) <= GRASP_TRACKING_TOLERANCE {
                    grip_closed = true;
                    self.closed_at = Some(t);
                    self.enter(t, Phase::Return);
                    // Retrace the approach legs, then go home.
                    let mut back: Vec<(Point3, JointVector)> = self.legs[..self.legs.len() - 1]
                        .iter()
                        .rev()
                        .map(|(p, j)| (*p, j.with_grip(0.0)))
                        .collect();
                    back.push((self.tip_rc(&self.home), self.home));
                    self.legs = back;
                    self.leg = 0;
                    self.command = self.legs[0].1;
                }
            }
            Phase::Return => {
                let (point, joints) = self.legs[self.leg];
                self.command = joints;
                let last = self.leg + 1 == self.legs.len();
                if last {
                    if q.arm_distance(&self.home) < self.config.home_tolerance {
                        self.enter(t, Phase::Done);
                    }
                } else if (self.tip_rc(q) - point).norm() < self.config.leg_tolerance_mm {
                    self.leg += 1;
                    self.command = self.legs[self.leg].1;
                }
            }
            Phase::Done | Phase::Aborted => {}
        }

        StepOutput {
            command: self.command,
            error: self.current_error(q),
            grip_closed,
        }
    }

    fn follow(&mut self, t: f64, q: &JointVector) {
        let Some((_, middle)) = self.last_middle else {
            return;
        };
        match self.solve(&self.follow_target(&middle), &self.command) {
            Ok(joints) => self.command = joints.with_grip(0.0),
            Err(e) => {
                self.abort(t, q, format!("follow target unreachable: {e}"));
                return;
            }
        }
        if self.settled() {
            match self.start_approach() {
                Ok(()) => {
                    self.enter(t, Phase::Approach);
                    self.command = self.legs[0].1;
                }
                Err(e) => self.abort(t, q, format!("grasp planning failed: {e}")),
            }
        }
    }

    fn current_error(&self, q: &JointVector) -> Vector3<f64> {
        let tip = self.estimated_tip(q);
        let standoff = self.config.standoff();
        match (self.phase, &self.plan, self.last_middle) {
            (Phase::Approach | Phase::Grasp, Some(plan), _) => {
                let target = self.chain.rc_from_ws.invert().apply(&plan.p_pl);
                compute_error(&target, &tip, Phase::Approach, &standoff)
            }
            (phase, _, Some((_, middle))) => compute_error(&middle, &tip, phase, &standoff),
            _ => Vector3::zeros(),
        }
    }
}

fn push_capped(window: &mut VecDeque<Point3>, p: Point3, cap: usize) {
    if window.len() == cap {
        window.pop_front();
    }
    window.push_back(p);
}

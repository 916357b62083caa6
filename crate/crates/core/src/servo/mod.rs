//! Position-based visual servoing and the grasp task state machine.

mod controller;
mod plan;

pub use controller::{Controller, StepOutput};
pub use plan::{plan_grasp, GraspPlan};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;
use crate::kinematics::{DlsSettings, JointVector, KinematicsError, DLS};
use crate::perception::PerceptionError;
use crate::registry::UnknownStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Home,
    Follow,
    Approach,
    Grasp,
    Return,
    Done,
    Aborted,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Home => "home",
            Phase::Follow => "follow",
            Phase::Approach => "approach",
            Phase::Grasp => "grasp",
            Phase::Return => "return",
            Phase::Done => "done",
            Phase::Aborted => "aborted",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Phase::Done | Phase::Aborted)
    }

    /// The legal transition graph: the task sequence plus abort from any
    /// non-terminal phase, and Follow re-entering itself.
    pub fn can_transition_to(&self, next: Phase) -> bool {
        use Phase::*;
        matches!(
            (self, next),
            (Home, Follow)
                | (Follow, Follow)
                | (Follow, Approach)
                | (Approach, Grasp)
                | (Grasp, Return)
                | (Return, Done)
        ) || (next == Aborted && !self.is_terminal())
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServoError {
    #[error("needle estimate is stale ({age:.3} s old)")]
    StaleEstimate { age: f64 },
    #[error("illegal phase transition {from} -> {to}")]
    IllegalTransition { from: Phase, to: Phase },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    UnknownSolver(#[from] UnknownStrategy),
    #[error("invalid servo parameters: {0}")]
    InvalidParameters(String),
}

/// Side of the needle the tool hovers on while following.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandoffDirection {
    /// `+z` of the workspace, away from the table.
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServoConfig {
    /// Follow-phase distance from the needle along the workspace z axis.
    pub standoff_mm: f64,
    pub standoff_direction: StandoffDirection,
    /// Number of tracker intervals the needle must hold still for.
    pub settle_window: usize,
    pub settle_epsilon_mm: f64,
    pub leg_tolerance_mm: f64,
    /// Height above the grasp point where the final docking leg starts.
    pub final_leg_mm: f64,
    pub grip_open_deg: f64,
    /// An estimate older than this many tracker periods is stale.
    pub stale_periods: f64,
    /// Abort once an estimate has been stale for this long.
    pub stale_abort_s: f64,
    /// Normalized joint distance counting as "at home".
    pub home_tolerance: f64,
    pub timeout_s: f64,
    pub ik_solver: String,
    pub dls: DlsSettings,
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self {
            standoff_mm: 25.0,
            standoff_direction: StandoffDirection::Up,
            settle_window: 8,
            settle_epsilon_mm: 1.0,
            leg_tolerance_mm: 0.5,
            final_leg_mm: 5.0,
            grip_open_deg: 45.0,
            stale_periods: 2.0,
            stale_abort_s: 1.0,
            home_tolerance: 1e-3,
            timeout_s: 60.0,
            ik_solver: DLS.to_string(),
            dls: DlsSettings::default(),
        }
    }
}

impl ServoConfig {
    pub fn validate(&self) -> Result<(), ServoError> {
        let positive = [
            self.standoff_mm,
            self.settle_epsilon_mm,
            self.leg_tolerance_mm,
            self.final_leg_mm,
            self.stale_periods,
            self.stale_abort_s,
            self.home_tolerance,
            self.timeout_s,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ServoError::InvalidParameters(
                "servo lengths, tolerances and times must be positive".into(),
            ));
        }
        if self.settle_window < 2 {
            return Err(ServoError::InvalidParameters("settle_window must be at least 2".into()));
        }
        if self.final_leg_mm >= self.standoff_mm {
            return Err(ServoError::InvalidParameters(
                "final_leg_mm must be below standoff_mm".into(),
            ));
        }
        if !(0.0..=90.0).contains(&self.grip_open_deg) {
            return Err(ServoError::InvalidParameters("grip_open_deg must be in [0, 90]".into()));
        }
        self.dls.validate()?;
        Ok(())
    }

    /// Follow-phase offset added to the needle position, in `/ws`.
    pub fn standoff(&self) -> Vector3<f64> {
        let sign = match self.standoff_direction {
            StandoffDirection::Up => 1.0,
            StandoffDirection::Down => -1.0,
        };
        Vector3::new(0.0, 0.0, sign * self.standoff_mm)
    }
}

/// Servo error `e = s_measured − s_current`, both in `/ws`, plus the
/// standoff offset during Follow.
pub fn compute_error(s_measured: &Point3, s_current: &Point3, phase: Phase, standoff: &Vector3<f64>) -> Vector3<f64> {
    let raw = s_measured - s_current;
    if phase == Phase::Follow {
        raw + standoff
    } else {
        raw
    }
}

/// `StaleEstimate` if a measurement taken at `measured_at` is older than
/// `max_age` at time `now`.
pub fn check_fresh(measured_at: f64, now: f64, max_age: f64) -> Result<(), ServoError> {
    let age = now - measured_at;
    if age > max_age {
        Err(ServoError::StaleEstimate { age })
    } else {
        Ok(())
    }
}

/// Ideal joint-level tracking: a first-order lag with rate saturation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointServo {
    pub tau_s: f64,
    pub max_rate_deg_s: f64,
    pub max_insertion_mm_s: f64,
    pub max_grip_deg_s: f64,
}

impl Default for JointServo {
    fn default() -> Self {
        Self {
            tau_s: 0.02,
            max_rate_deg_s: 90.0,
            max_insertion_mm_s: 60.0,
            max_grip_deg_s: 180.0,
        }
    }
}

impl JointServo {
    pub fn validate(&self) -> Result<(), ServoError> {
        if [
            self.tau_s,
            self.max_rate_deg_s,
            self.max_insertion_mm_s,
            self.max_grip_deg_s,
        ]
        .iter()
        .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(ServoError::InvalidParameters(
                "joint servo constants must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Joint state after `dt` seconds of tracking `command` from `q`.
    pub fn advance(&self, q: &JointVector, command: &JointVector, dt: f64) -> JointVector {
        let alpha = 1.0 - (-dt / self.tau_s).exp();
        let rate = self.max_rate_deg_s.to_radians() * dt;
        let limits = [
            rate,
            rate,
            self.max_insertion_mm_s * dt,
            rate,
            rate,
            rate,
            self.max_grip_deg_s.to_radians() * dt,
        ];
        let (cur, cmd) = (q.to_array(), command.to_array());
        JointVector::from_array(std::array::from_fn(|i| {
            let delta = ((cmd[i] - cur[i]) * alpha).clamp(-limits[i], limits[i]);
            // Snap once the remaining error is below floating-point noise.
            if (cmd[i] - cur[i] - delta).abs() <= 1e-12 * cmd[i].abs().max(1.0) {
                cmd[i]
            } else {
                cur[i] + delta
            }
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutcomeThresholds {
    /// Tip-to-needle-curve distance at closure that counts as captured.
    pub capture_radius_mm: f64,
    pub miss_mm: f64,
    pub fail_mm: f64,
}

impl Default for OutcomeThresholds {
    fn default() -> Self {
        Self {
            capture_radius_mm: 2.0,
            miss_mm: 4.0,
            fail_mm: 20.0,
        }
    }
}

impl OutcomeThresholds {
    pub fn validate(&self) -> Result<(), ServoError> {
        if !(self.capture_radius_mm > 0.0 && self.miss_mm > 0.0 && self.miss_mm < self.fail_mm) {
            return Err(ServoError::InvalidParameters(
                "outcome thresholds need 0 < miss < fail and capture > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Success,
    Miss,
    Fail,
}

impl OutcomeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutcomeKind::Success => "success",
            OutcomeKind::Miss => "miss",
            OutcomeKind::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    /// `‖p_needle − p_tip‖` (mm).
    pub final_tip_error: f64,
    /// Per-axis `p_needle − p_tip` in `/ws` (mm).
    pub components: [f64; 3],
    /// Not captured with error between the miss and fail thresholds.
    pub unclassified_band: bool,
}

/// Classifies a finished trial from the tip position at grip closure.
pub fn classify_outcome(
    final_tip: &Point3,
    needle_middle: &Point3,
    captured: bool,
    thresholds: &OutcomeThresholds,
) -> Outcome {
    let d = needle_middle - final_tip;
    let error = d.norm();
    let kind = if captured {
        OutcomeKind::Success
    } else if error >= thresholds.fail_mm {
        OutcomeKind::Fail
    } else {
        OutcomeKind::Miss
    };
    Outcome {
        kind,
        final_tip_error: error,
        components: [d.x, d.y, d.z],
        unclassified_band: !captured && error > thresholds.miss_mm && error < thresholds.fail_mm,
    }
}

//! Scenario configuration: JSON, lengths in mm, angles in degrees.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::motion::MotionSpec;
use super::HarnessError;
use crate::camera::{CameraIntrinsics, Chessboard, StereoRig};
use crate::geometry::RigidTransform;
use crate::kinematics::{JointLimits, JointVector, KinematicChain};
use crate::perception::{NoiseModel, RateConfig, DEFAULT_MARKER_ANGLES_DEG};
use crate::registration::HORN_QUATERNION;
use crate::servo::{JointServo, OutcomeThresholds, ServoConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    /// Base seed; per-trial seeds are derived from it.
    pub seed: u64,
    /// Trials run by `batch` when no count is given.
    pub trials: usize,
    pub rig: RigConfig,
    pub chain: ChainConfig,
    pub needle: NeedleConfig,
    pub motion: MotionSpec,
    pub noise: NoiseModel,
    pub rates: RateConfig,
    pub occlusion: OcclusionConfig,
    pub calibration: CalibrationConfig,
    pub servo: ServoConfig,
    pub joint_servo: JointServo,
    pub outcome: OutcomeThresholds,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 1,
            trials: 40,
            rig: RigConfig::default(),
            chain: ChainConfig::default(),
            needle: NeedleConfig::default(),
            motion: MotionSpec::default(),
            noise: NoiseModel::default(),
            rates: RateConfig::default(),
            occlusion: OcclusionConfig::default(),
            calibration: CalibrationConfig::default(),
            servo: ServoConfig::default(),
            joint_servo: JointServo::default(),
            outcome: OutcomeThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigConfig {
    /// Shared by both cameras.
    pub intrinsics: CameraIntrinsics,
    pub baseline_mm: f64,
    /// Left camera center in `/ws`.
    pub camera_position_mm: [f64; 3],
    /// Point on the left camera's optical axis, in `/ws`.
    pub camera_aim_mm: [f64; 3],
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics {
                fx: 1000.0,
                fy: 1000.0,
                cx: 360.0,
                cy: 288.0,
                image_width: 720,
                image_height: 576,
            },
            baseline_mm: 4.3,
            camera_position_mm: [0.0, -15.0, 115.0],
            camera_aim_mm: [0.0, 0.0, 20.0],
        }
    }
}

/// Frame at `position` whose z axis points toward `aim` (or away from it
/// when `toward` is false). Its x axis is the workspace x axis made
/// orthogonal to z, then rolled about z by `roll_deg`.
fn aimed_frame(position: [f64; 3], aim: [f64; 3], toward: bool, roll_deg: f64) -> Result<RigidTransform, HarnessError> {
    let pos = Vector3::from(position);
    let dir = Vector3::from(aim) - pos;
    if dir.norm() < 1e-9 {
        return Err(HarnessError::Invalid("aim point coincides with position".into()));
    }
    let z = if toward { dir.normalize() } else { -dir.normalize() };
    let mut x = Vector3::x() - z * z.x;
    if x.norm() < 1e-6 {
        x = Vector3::y() - z * z.y;
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let (s, c) = roll_deg.to_radians().sin_cos();
    let (x, y) = (x * c + y * s, y * c - x * s);
    Ok(RigidTransform::new(Matrix3::from_columns(&[x, y, z]), pos)?)
}

impl RigConfig {
    /// `ws_from_ee`: the left camera looks along its +z toward the aim point.
    pub fn ws_from_ee(&self) -> Result<RigidTransform, HarnessError> {
        aimed_frame(self.camera_position_mm, self.camera_aim_mm, true, 0.0)
    }

    pub fn build(&self) -> Result<StereoRig, HarnessError> {
        let right_from_left = RigidTransform::from_translation(Vector3::new(-self.baseline_mm, 0.0, 0.0));
        Ok(StereoRig::new(
            self.intrinsics,
            self.intrinsics,
            right_from_left,
            self.ws_from_ee()?.invert(),
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    /// Remote center of motion in `/ws`.
    pub rc_position_mm: [f64; 3],
    /// The `/rc` −z axis (home insertion direction) points at this point.
    pub rc_aim_mm: [f64; 3],
    pub rc_roll_deg: f64,
    pub wrist_length_mm: f64,
    pub jaw_length_mm: f64,
    /// θ1, θ2 (deg), d3 (mm), θ4, θ5, θ6, grip (deg).
    pub lower_limits: [f64; 7],
    pub upper_limits: [f64; 7],
    pub home: [f64; 7],
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            rc_position_mm: [-60.0, 30.0, 170.0],
            rc_aim_mm: [0.0, 0.0, 20.0],
            rc_roll_deg: 20.0,
            wrist_length_mm: 9.0,
            jaw_length_mm: 10.0,
            lower_limits: [-80.0, -80.0, 0.0, -170.0, -80.0, -80.0, 0.0],
            upper_limits: [80.0, 80.0, 240.0, 170.0, 80.0, 80.0, 60.0],
            home: [0.0, 0.0, 100.0, 0.0, 0.0, 0.0, 0.0],
        }
    }
}

/// Converts a degree/mm joint array into radians/mm.
pub fn joints_from_config(v: [f64; 7]) -> JointVector {
    let mut out = v.map(f64::to_radians);
    out[2] = v[2];
    JointVector::from_array(out)
}

impl ChainConfig {
    pub fn rc_from_ws(&self) -> Result<RigidTransform, HarnessError> {
        Ok(aimed_frame(self.rc_position_mm, self.rc_aim_mm, false, self.rc_roll_deg)?.invert())
    }

    pub fn limits(&self) -> Result<JointLimits, HarnessError> {
        Ok(JointLimits::new(
            joints_from_config(self.lower_limits),
            joints_from_config(self.upper_limits),
        )?)
    }

    pub fn home(&self) -> JointVector {
        joints_from_config(self.home)
    }

    pub fn build(&self) -> Result<KinematicChain, HarnessError> {
        Ok(KinematicChain::new(
            self.rc_from_ws()?,
            self.wrist_length_mm,
            self.jaw_length_mm,
            self.limits()?,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeedleConfig {
    pub radius_mm: f64,
    /// Tip-side, middle and tail-side marker angles on the arc.
    pub marker_angles_deg: [f64; 3],
    /// Per-trial uniform offset applied to the whole motion script.
    pub position_jitter_mm: f64,
    /// Per-trial uniform yaw applied to the whole motion script.
    pub yaw_jitter_deg: f64,
}

impl Default for NeedleConfig {
    fn default() -> Self {
        Self {
            radius_mm: 12.0,
            marker_angles_deg: DEFAULT_MARKER_ANGLES_DEG,
            position_jitter_mm: 0.0,
            yaw_jitter_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcclusionConfig {
    /// Hide markers behind the instrument shaft.
    pub enabled: bool,
    pub shaft_radius_mm: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            shaft_radius_mm: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// When false the servo uses the true calibration.
    pub enabled: bool,
    pub scan_points_per_plane: usize,
    /// Side of the square patch scanned on each plane.
    pub scan_patch_mm: f64,
    pub scan_tip_sigma_mm: f64,
    pub registration_points: usize,
    pub registration_tip_sigma_mm: f64,
    pub registration_method: String,
    pub extrinsic_corner_sigma_px: f64,
    pub check_points: usize,
    pub board: Chessboard,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            scan_points_per_plane: 500,
            scan_patch_mm: 40.0,
            scan_tip_sigma_mm: 0.0,
            registration_points: 10,
            registration_tip_sigma_mm: 0.0,
            registration_method: HORN_QUATERNION.into(),
            extrinsic_corner_sigma_px: 0.0,
            check_points: 20,
            board: Chessboard {
                rows: 5,
                cols: 7,
                square_size: 10.0,
            },
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let rig = self.rig.build()?;
        let chain = self.chain.build()?;
        chain.limits.check(&self.chain.home())?;
        self.noise.validate()?;
        self.rates.validate()?;
        self.servo.validate()?;
        self.joint_servo.validate()?;
        self.outcome.validate()?;
        self.motion.validate()?;
        let c = &self.calibration;
        c.board.validate()?;
        let sigmas = [
            c.scan_tip_sigma_mm,
            c.registration_tip_sigma_mm,
            c.extrinsic_corner_sigma_px,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) || !(c.scan_patch_mm > 0.0) {
            return Err(HarnessError::Invalid(
                "calibration sigmas must be ≥ 0 and the scan patch positive".into(),
            ));
        }
        if c.scan_points_per_plane < 3 {
            return Err(HarnessError::Invalid("scan needs at least 3 points per plane".into()));
        }
        let n = c.board.corner_count();
        if !(3..=n).contains(&c.registration_points) || !(1..=n).contains(&c.check_points) {
            return Err(HarnessError::Invalid(format!(
                "registration_points must be in [3, {n}] and check_points in [1, {n}]"
            )));
        }
        if !(self.needle.position_jitter_mm >= 0.0 && self.needle.yaw_jitter_deg >= 0.0) {
            return Err(HarnessError::Invalid("needle jitter must be ≥ 0".into()));
        }
        if !(self.occlusion.shaft_radius_mm > 0.0) {
            return Err(HarnessError::Invalid("shaft radius must be positive".into()));
        }
        // The needle must start inside the shared field of view.
        let needle = self.motion.build(0, &self.needle)?.pose_at(0.0);
        let state = crate::perception::NeedleState::new(needle, self.needle.radius_mm, self.needle.marker_angles_deg)?;
        if state.markers.iter().any(|m| rig.project_visible(m).is_none()) {
            log::warn!(
                "scenario '{}': needle markers start outside the shared field of view",
                self.name
            );
        }
        Ok(())
    }

    /// Pretty JSON with every field present, defaults included.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

//! Scenario configuration, calibration simulation, trial and batch
//! runners, report output and the published-table check.

mod batch;
mod calibration;
mod config;
mod motion;
mod output;
mod table1;
mod trial;

pub use batch::{run_batch, AxisQuartiles, BatchReport, BatchResult, BoxStats, OutcomeCounts, TrialSummary};
pub use calibration::{estimated_rig, simulate_calibration, CalibReport};
pub use config::{
    joints_from_config, CalibrationConfig, ChainConfig, NeedleConfig, OcclusionConfig, RigConfig, ScenarioConfig,
};
pub use motion::{MotionSpec, NeedleMotion, PoseSpec, Waypoint};
pub use output::{write_atomic, write_detections_csv, write_trace_csv, DETECTION_SCHEMA, TRACE_SCHEMA};
pub use table1::{verify_table1, MismatchReport, RowCheck, Table1Report, Table1Row, TABLE1};
pub use trial::{run_trial, DetectionRow, TraceRow, TrialRecord};

use thiserror::Error;

use crate::camera::CameraError;
use crate::geometry::GeometryError;
use crate::kinematics::KinematicsError;
use crate::perception::PerceptionError;
use crate::registry::UnknownStrategy;
use crate::servo::ServoError;

/// Environment variable naming the directory for relative output paths.
pub const OUT_DIR_ENV: &str = "NEEDLE_GRASP_OUT_DIR";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Servo(#[from] ServoError),
    #[error(transparent)]
    UnknownStrategy(#[from] UnknownStrategy),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

pub(crate) const STREAM_CALIBRATION: u64 = 1;
pub(crate) const STREAM_TRACKER: u64 = 2;
pub(crate) const STREAM_MOTION: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index` in a batch with base seed `base`.
pub fn trial_seed(base: u64, index: usize) -> u64 {
    splitmix64(base ^ splitmix64(index as u64))
}

/// Independent sub-seed of `seed` for one random stream of a trial.
pub(crate) fn substream(seed: u64, stream: u64) -> u64 {
    splitmix64(seed.wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

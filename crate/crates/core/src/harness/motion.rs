//! Scripted needle motion.

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::NeedleConfig;
use super::HarnessError;
use crate::geometry::RigidTransform;

/// Needle pose (`ws_from_needle`) as a function of time.
pub trait NeedleMotion: Send + Sync {
    fn pose_at(&self, t: f64) -> RigidTransform;
    /// Time after which the needle no longer moves.
    fn settle_time(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub position_mm: [f64; 3],
    /// Roll, pitch, yaw applied as `R_z(yaw)·R_y(pitch)·R_x(roll)`.
    #[serde(default)]
    pub rpy_deg: [f64; 3],
}

impl PoseSpec {
    pub fn to_transform(&self) -> RigidTransform {
        let [r, p, y] = self.rpy_deg.map(f64::to_radians);
        RigidTransform::from_rotation(Rotation3::from_euler_angles(r, p, y), Vector3::from(self.position_mm))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t_s: f64,
    pub position_mm: [f64; 3],
    #[serde(default)]
    pub rpy_deg: [f64; 3],
}

impl Waypoint {
    pub fn pose(&self) -> PoseSpec {
        PoseSpec {
            position_mm: self.position_mm,
            rpy_deg: self.rpy_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionSpec {
    Static {
        pose: PoseSpec,
    },
    /// Piecewise-linear motion between timed poses; the needle holds the
    /// first pose before the first time and the last pose after the last.
    Waypoints {
        waypoints: Vec<Waypoint>,
    },
    /// Seeded bounded random walk of the needle position.
    RandomWalk {
        start: PoseSpec,
        step_mm: f64,
        step_interval_s: f64,
        duration_s: f64,
        bound_mm: f64,
    },
}

impl Default for MotionSpec {
    /// Three scripted shifts separated by holds shorter than the settle
    /// window, then rest.
    fn default() -> Self {
        let wp = |t_s: f64, position_mm: [f64; 3], yaw: f64| Waypoint {
            t_s,
            position_mm,
            rpy_deg: [0.0, 0.0, yaw],
        };
        MotionSpec::Waypoints {
            waypoints: vec![
                wp(0.0, [0.0, 0.0, 20.0], 0.0),
                wp(0.5, [0.0, 0.0, 20.0], 0.0),
                wp(1.5, [6.0, -4.0, 22.0], 15.0),
                wp(2.0, [6.0, -4.0, 22.0], 15.0),
                wp(3.0, [-3.0, 5.0, 19.0], -10.0),
                wp(3.5, [-3.0, 5.0, 19.0], -10.0),
                wp(4.5, [2.0, 3.0, 20.0], 5.0),
            ],
        }
    }
}

impl MotionSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        match self {
            MotionSpec::Static { .. } => Ok(()),
            MotionSpec::Waypoints { waypoints } => {
                if waypoints.is_empty() {
                    return Err(HarnessError::Invalid(
                        "waypoint motion needs at least one waypoint".into(),
                    ));
                }
                if waypoints.windows(2).any(|w| !(w[1].t_s > w[0].t_s)) {
                    return Err(HarnessError::Invalid(
                        "waypoint times must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            MotionSpec::RandomWalk {
                step_mm,
                step_interval_s,
                duration_s,
                bound_mm,
                ..
            } => {
                if !(*step_mm >= 0.0 && *step_interval_s > 0.0 && *duration_s >= 0.0 && *bound_mm >= 0.0) {
                    return Err(HarnessError::Invalid(
                        "random walk needs step ≥ 0, interval > 0, duration ≥ 0, bound ≥ 0".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Builds the motion for one trial. `seed` drives the per-trial jitter
    /// and the random walk.
    pub fn build(&self, seed: u64, needle: &NeedleConfig) -> Result<Box<dyn NeedleMotion>, HarnessError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = needle.position_jitter_mm;
        let offset = Vector3::new(
            rng.random_range(-1.0..=1.0) * j,
            rng.random_range(-1.0..=1.0) * j,
            rng.random_range(-1.0..=1.0) * j,
        );
        let yaw = (rng.random_range(-1.0..=1.0) * needle.yaw_jitter_deg).to_radians();
        let jitter = JitterFn { offset, yaw };
        let motion: Box<dyn NeedleMotion> = match self {
            MotionSpec::Static { pose } => Box::new(Waypoints {
                poses: vec![(0.0, jitter.apply(&pose.to_transform()))],
            }),
            MotionSpec::Waypoints { waypoints } => Box::new(Waypoints {
                poses: waypoints
                    .iter()
                    .map(|w| (w.t_s, jitter.apply(&w.pose().to_transform())))
                    .collect(),
            }),
            MotionSpec::RandomWalk {
                start,
                step_mm,
                step_interval_s,
                duration_s,
                bound_mm,
            } => {
                let origin = jitter.apply(&start.to_transform());
                let steps = (duration_s / step_interval_s).floor() as usize;
                let mut offset = Vector3::zeros();
                let mut poses = vec![(0.0, origin)];
                for k in 1..=steps {
                    let d = Vector3::new(
                        rng.random_range(-1.0..=1.0),
                        rng.random_range(-1.0..=1.0),
                        rng.random_range(-1.0..=1.0),
                    );
                    offset = (offset + d * *step_mm).map(|c: f64| c.clamp(-*bound_mm, *bound_mm));
                    let pose = RigidTransform::from_translation(offset).compose(&origin);
                    poses.push((k as f64 * step_interval_s, pose));
                }
                Box::new(Waypoints { poses })
            }
        };
        Ok(motion)
    }
}

/// Per-trial perturbation: the needle orientation is yawed about the
/// workspace z axis and every position shifted by the same offset.
struct JitterFn {
    offset: Vector3<f64>,
    yaw: f64,
}

impl JitterFn {
    fn apply(&self, pose: &RigidTransform) -> RigidTransform {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw);
        let r = rot.matrix() * pose.rotation();
        RigidTransform::from_rotation(Rotation3::from_matrix_unchecked(r), pose.translation() + self.offset)
    }
}

/// Linear interpolation of position and spherical interpolation of
/// orientation between timed poses.
struct Waypoints {
    poses: Vec<(f64, RigidTransform)>,
}

impl NeedleMotion for Waypoints {
    fn pose_at(&self, t: f64) -> RigidTransform {
        let first = &self.poses[0];
        if t <= first.0 {
            return first.1;
        }
        for w in self.poses.windows(2) {
            let ((t0, a), (t1, b)) = (w[0], w[1]);
            if t < t1 {
                let s = (t - t0) / (t1 - t0);
                let q = a.quaternion().slerp(&b.quaternion(), s);
                let p = a.translation().lerp(b.translation(), s);
                return RigidTransform::from_quaternion(q, p);
            }
        }
        self.poses[self.poses.len() - 1].1
    }

    fn settle_time(&self) -> f64 {
        // Trailing waypoints identical to their predecessor do not move.
        let mut end = self.poses.len() - 1;
        while end > 0 && self.poses[end].1 == self.poses[end - 1].1 {
            end -= 1;
        }
        self.poses[end].0
    }
}

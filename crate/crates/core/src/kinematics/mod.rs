//! Remote-center-of-motion manipulator model.
//!
//! The chain pivots about the remote center (origin of `/rc`). The first
//! two revolute joints orient the shaft, the prismatic joint inserts it:
//!
//! ```text
//! pre-wrist point  p = d3 · R_y(θ1)·R_x(θ2)·(0, 0, −1)
//! tool rotation    R = R_y(θ1)·R_x(θ2)·R_z(θ4)·R_y(θ5)·R_x(θ6)
//! tool tip         p + R·(0, 0, −(wrist_length + jaw_length))
//! ```
//!
//! The wrist is spherical and centered on the pre-wrist point. The tool
//! frame's z axis points back up the instrument; its x axis is the jaw
//! hinge axis.

mod analytic;
mod dls;
mod solver;

pub use analytic::{ik_analytic_position, select_solution, PositionJoints};
pub use dls::{dls_step, ik_iterative, ik_iterative_traced, solve_wrist, DlsSettings, IkSolution};
pub use solver::{builtin_ik_solvers, AnalyticSolver, DlsSolver, IkSolver, ANALYTIC, DLS};

use nalgebra::{Matrix3, Matrix6, Rotation3, Vector3, Vector6};
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{rot_x, rot_y, rot_z, Point3, RigidTransform};

/// Millimetres of insertion treated as one radian when normalizing joints.
pub const PRISMATIC_SCALE: f64 = 100.0;

pub const JOINT_NAMES: [&str; 7] = ["theta1", "theta2", "d3", "theta4", "theta5", "theta6", "grip"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("joint {joint} = {value} outside [{lower}, {upper}]")]
    JointLimitViolation {
        joint: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("IK did not converge after {iterations} iterations (position {position_error:.4} mm, orientation {orientation_error:.2e} rad)")]
    NoConvergence {
        iterations: usize,
        position_error: f64,
        orientation_error: f64,
        best: JointVector,
    },
    #[error("target is outside the workspace")]
    OutOfWorkspace,
    #[error("target lies on the shaft singularity; θ1 is undefined")]
    SingularDirection,
    #[error("neither analytic solution respects the joint limits")]
    NoFeasibleSolution,
    #[error("linear solve failed: {0}")]
    NumericalFailure(String),
    #[error("invalid chain parameters: {0}")]
    InvalidParameters(String),
}

/// Joint state: (θ1, θ2) shaft yaw/pitch in rad, d3 insertion in mm,
/// (θ4, θ5, θ6) wrist roll/pitch/yaw in rad, grip opening in rad.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct JointVector {
    pub theta1: f64,
    pub theta2: f64,
    pub d3: f64,
    pub theta4: f64,
    pub theta5: f64,
    pub theta6: f64,
    pub grip: f64,
}

impl JointVector {
    pub fn new(theta1: f64, theta2: f64, d3: f64, theta4: f64, theta5: f64, theta6: f64, grip: f64) -> Self {
        Self {
            theta1,
            theta2,
            d3,
            theta4,
            theta5,
            theta6,
            grip,
        }
    }

    pub fn from_array(v: [f64; 7]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6])
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.theta1,
            self.theta2,
            self.d3,
            self.theta4,
            self.theta5,
            self.theta6,
            self.grip,
        ]
    }

    /// The six arm joints (grip excluded), in Jacobian column order.
    pub fn arm(&self) -> Vector6<f64> {
        Vector6::new(self.theta1, self.theta2, self.d3, self.theta4, self.theta5, self.theta6)
    }

    pub fn with_arm(&self, arm: &Vector6<f64>) -> Self {
        Self::new(arm[0], arm[1], arm[2], arm[3], arm[4], arm[5], self.grip)
    }

    pub fn with_position(&self, p: &PositionJoints) -> Self {
        Self {
            theta1: p.theta1,
            theta2: p.theta2,
            d3: p.d3,
            ..*self
        }
    }

    pub fn with_wrist(&self, wrist: [f64; 3]) -> Self {
        Self {
            theta4: wrist[0],
            theta5: wrist[1],
            theta6: wrist[2],
            ..*self
        }
    }

    pub fn with_grip(&self, grip: f64) -> Self {
        Self { grip, ..*self }
    }

    /// Arm joints in normalized units (insertion divided by
    /// [`PRISMATIC_SCALE`]).
    pub fn normalized_arm(&self) -> Vector6<f64> {
        let mut v = self.arm();
        v[2] /= PRISMATIC_SCALE;
        v
    }

    /// Largest normalized difference over the arm joints.
    pub fn arm_distance(&self, other: &JointVector) -> f64 {
        (self.normalized_arm() - other.normalized_arm()).amax()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointLimits {
    pub lower: JointVector,
    pub upper: JointVector,
}

impl Default for JointLimits {
    fn default() -> Self {
        let d = f64::to_radians;
        Self {
            lower: JointVector::new(d(-80.0), d(-80.0), 0.0, d(-170.0), d(-80.0), d(-80.0), 0.0),
            upper: JointVector::new(d(80.0), d(80.0), 240.0, d(170.0), d(80.0), d(80.0), d(60.0)),
        }
    }
}

impl JointLimits {
    pub fn new(lower: JointVector, upper: JointVector) -> Result<Self, KinematicsError> {
        let (lo, hi) = (lower.to_array(), upper.to_array());
        for i in 0..7 {
            if !(lo[i] < hi[i]) {
                return Err(KinematicsError::InvalidParameters(format!(
                    "limit for {} must satisfy lower < upper",
                    JOINT_NAMES[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn check(&self, q: &JointVector) -> Result<(), KinematicsError> {
        let (v, lo, hi) = (q.to_array(), self.lower.to_array(), self.upper.to_array());
        for i in 0..7 {
            if !(v[i] >= lo[i] && v[i] <= hi[i]) {
                return Err(KinematicsError::JointLimitViolation {
                    joint: JOINT_NAMES[i],
                    value: v[i],
                    lower: lo[i],
                    upper: hi[i],
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, q: &JointVector) -> bool {
        self.check(q).is_ok()
    }

    pub fn contains_position(&self, p: &PositionJoints) -> bool {
        let l = &self.lower;
        let u = &self.upper;
        (l.theta1..=u.theta1).contains(&p.theta1)
            && (l.theta2..=u.theta2).contains(&p.theta2)
            && (l.d3..=u.d3).contains(&p.d3)
    }

    pub fn clamp(&self, q: &JointVector) -> JointVector {
        let (v, lo, hi) = (q.to_array(), self.lower.to_array(), self.upper.to_array());
        JointVector::from_array(std::array::from_fn(|i| v[i].clamp(lo[i], hi[i])))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KinematicChain {
    /// Mount of the remote center: maps workspace points into `/rc`.
    pub rc_from_ws: RigidTransform,
    pub wrist_length: f64,
    pub jaw_length: f64,
    pub limits: JointLimits,
}

/// Forward kinematics result, all in `/rc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolPose {
    pub pre_wrist: Point3,
    pub tip: Point3,
    /// Tool frame: rotation is the tool orientation, translation the tip.
    pub pose: RigidTransform,
}

pub fn shaft_rotation(theta1: f64, theta2: f64) -> Matrix3<f64> {
    rot_y(theta1) * rot_x(theta2)
}

pub fn wrist_rotation(wrist: [f64; 3]) -> Matrix3<f64> {
    rot_z(wrist[0]) * rot_y(wrist[1]) * rot_x(wrist[2])
}

/// Unit insertion direction `R_y(θ1)·R_x(θ2)·(0, 0, −1)`.
pub fn insertion_direction(theta1: f64, theta2: f64) -> Vector3<f64> {
    let (s1, c1) = theta1.sin_cos();
    let (s2, c2) = theta2.sin_cos();
    Vector3::new(-s1 * c2, s2, -c1 * c2)
}

/// ZYX decomposition `R = R_z(a)·R_y(b)·R_x(c)`, returning `[a, b, c]`.
pub fn zyx_angles(r: &Matrix3<f64>) -> [f64; 3] {
    let b = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let a = r[(1, 0)].atan2(r[(0, 0)]);
    let c = r[(2, 1)].atan2(r[(2, 2)]);
    [a, b, c]
}

impl KinematicChain {
    pub fn new(
        rc_from_ws: RigidTransform,
        wrist_length: f64,
        jaw_length: f64,
        limits: JointLimits,
    ) -> Result<Self, KinematicsError> {
        if !(wrist_length > 0.0 && jaw_length > 0.0) {
            return Err(KinematicsError::InvalidParameters(
                "wrist and jaw lengths must be positive".into(),
            ));
        }
        Ok(Self {
            rc_from_ws,
            wrist_length,
            jaw_length,
            limits,
        })
    }

    /// Distance from the wrist center to the tool tip.
    pub fn tool_length(&self) -> f64 {
        self.wrist_length + self.jaw_length
    }

    pub fn with_rc_from_ws(&self, rc_from_ws: RigidTransform) -> Self {
        Self { rc_from_ws, ..*self }
    }

    pub fn forward(&self, q: &JointVector) -> Result<ToolPose, KinematicsError> {
        self.limits.check(q)?;
        Ok(self.forward_unchecked(q))
    }

    /// Forward kinematics without the joint-limit check.
    pub fn forward_unchecked(&self, q: &JointVector) -> ToolPose {
        let shaft = shaft_rotation(q.theta1, q.theta2);
        let pre_wrist = Point3::from(shaft * Vector3::new(0.0, 0.0, -q.d3));
        let tool = shaft * wrist_rotation([q.theta4, q.theta5, q.theta6]);
        let tip = pre_wrist + tool * Vector3::new(0.0, 0.0, -self.tool_length());
        let pose = RigidTransform::from_rotation(Rotation3::from_matrix_unchecked(tool), tip.coords);
        ToolPose { pre_wrist, tip, pose }
    }

    /// Tool tip in the workspace frame.
    pub fn tip_in_ws(&self, q: &JointVector) -> Point3 {
        self.rc_from_ws.invert().apply(&self.forward_unchecked(q).tip)
    }

    pub fn jacobian(&self, q: &JointVector) -> Result<Matrix6<f64>, KinematicsError> {
        self.limits.check(q)?;
        Ok(self.jacobian_unchecked(q))
    }

    /// Geometric Jacobian: rows 0..3 tip linear velocity, rows 3..6 tool
    /// angular velocity, both in `/rc`; columns ordered θ1, θ2, d3, θ4, θ5, θ6.
    pub fn jacobian_unchecked(&self, q: &JointVector) -> Matrix6<f64> {
        let fk = self.forward_unchecked(q);
        let tip = fk.tip.coords;
        let wrist = fk.pre_wrist.coords;
        let r1 = rot_y(q.theta1);
        let shaft = r1 * rot_x(q.theta2);
        let r4 = shaft * rot_z(q.theta4);
        let r5 = r4 * rot_y(q.theta5);

        let axes = [
            Vector3::y(),
            r1 * Vector3::x(),
            Vector3::zeros(),
            shaft * Vector3::z(),
            r4 * Vector3::y(),
            r5 * Vector3::x(),
        ];
        let mut j = Matrix6::zeros();
        for (col, axis) in axes.iter().enumerate() {
            let linear = match col {
                0 | 1 => axis.cross(&tip),
                2 => insertion_direction(q.theta1, q.theta2),
                _ => axis.cross(&(tip - wrist)),
            };
            j.fixed_view_mut::<3, 1>(0, col).copy_from(&linear);
            j.fixed_view_mut::<3, 1>(3, col).copy_from(axis);
        }
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_vector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn chain() -> KinematicChain {
        KinematicChain::new(RigidTransform::identity(), 9.0, 10.0, JointLimits::default()).unwrap()
    }

    fn wide_chain() -> KinematicChain {
        let limits = JointLimits::new(
            JointVector::new(-3.2, -3.2, -300.0, -3.2, -3.2, -3.2, 0.0),
            JointVector::new(3.2, 3.2, 300.0, 3.2, 3.2, 3.2, 1.0),
        )
        .unwrap();
        KinematicChain::new(RigidTransform::identity(), 9.0, 10.0, limits).unwrap()
    }

    pub(crate) fn random_joints(rng: &mut ChaCha8Rng, limits: &JointLimits) -> JointVector {
        let (lo, hi) = (limits.lower.to_array(), limits.upper.to_array());
        JointVector::from_array(std::array::from_fn(|i| rng.random_range(lo[i]..hi[i])))
    }

    #[test]
    fn pre_wrist_examples() {
        let c = chain();
        let fk = c
            .forward(&JointVector::new(0.0, 0.0, 150.0, 0.0, 0.0, 0.0, 0.0))
            .unwrap();
        assert_eq!(fk.pre_wrist, Point3::new(0.0, 0.0, -150.0));
        assert!((fk.tip - Point3::new(0.0, 0.0, -169.0)).norm() < 1e-12);

        let w = wide_chain();
        let fk = w
            .forward(&JointVector::new(0.0, FRAC_PI_2, 100.0, 0.0, 0.0, 0.0, 0.0))
            .unwrap();
        assert!((fk.pre_wrist - Point3::new(0.0, 100.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn remote_center_is_fixed() {
        let c = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..1000 {
            let q = random_joints(&mut rng, &c.limits);
            let fk = c.forward(&JointVector { d3: 0.0, ..q }).unwrap();
            assert!(fk.pre_wrist.coords.norm() < 1e-12);
        }
    }

    #[test]
    fn limits_are_enforced() {
        let c = chain();
        let q = JointVector::new(0.0, 0.0, 250.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            c.forward(&q),
            Err(KinematicsError::JointLimitViolation { joint: "d3", .. })
        ));
        assert!(c.jacobian(&q).is_err());
        assert!(c.limits.contains(&c.limits.clamp(&q)));
        assert!(JointLimits::new(JointVector::default(), JointVector::default()).is_err());
    }

    /// Central-difference Jacobian; angular rows from the rotation-vector of
    /// `R(q+h)·R(q−h)ᵀ`.
    pub(crate) fn finite_difference_jacobian(c: &KinematicChain, q: &JointVector, h: f64) -> Matrix6<f64> {
        let mut j = Matrix6::zeros();
        for col in 0..6 {
            let mut plus = q.arm();
            let mut minus = q.arm();
            plus[col] += h;
            minus[col] -= h;
            let fp = c.forward_unchecked(&q.with_arm(&plus));
            let fm = c.forward_unchecked(&q.with_arm(&minus));
            let lin = (fp.tip - fm.tip) / (2.0 * h);
            let ang = rotation_vector(&(fp.pose.rotation() * fm.pose.rotation().transpose())) / (2.0 * h);
            j.fixed_view_mut::<3, 1>(0, col).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, col).copy_from(&ang);
        }
        j
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let c = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let q = random_joints(&mut rng, &c.limits);
            let ja = c.jacobian(&q).unwrap();
            let jf = finite_difference_jacobian(&c, &q, 1e-6);
            assert!((ja - jf).amax() < 1e-5);
        }
    }

    #[test]
    fn jacobian_gimbal_alignment() {
        let w = wide_chain();
        let q = JointVector::new(0.3, FRAC_PI_2, 120.0, 0.0, 0.0, 0.0, 0.0);
        let j = w.jacobian(&q).unwrap();
        // Position block of the shaft joints (θ1, θ2, d3).
        let block = j.fixed_view::<3, 3>(0, 0).into_owned();
        let sv = block.singular_values();
        assert!(sv.min() < 1e-6 * sv.max());
        assert!(j.fixed_view::<3, 1>(0, 0).norm() < 1e-9);
    }

    #[test]
    fn insertion_column_is_shaft_axis() {
        let c = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..20 {
            let q = random_joints(&mut rng, &c.limits);
            let j = c.jacobian(&q).unwrap();
            let u = insertion_direction(q.theta1, q.theta2);
            assert!((j.fixed_view::<3, 1>(0, 2) - u).norm() < 1e-15);
            assert!(j.fixed_view::<3, 1>(3, 2).norm() == 0.0);
        }
    }

    #[test]
    fn zyx_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            let w = [
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.0..3.0),
            ];
            let back = zyx_angles(&wrist_rotation(w));
            for i in 0..3 {
                assert!((back[i] - w[i]).abs() < 1e-9);
            }
        }
    }
}

//! Damped least-squares inverse kinematics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{shaft_rotation, zyx_angles, JointVector, KinematicChain, KinematicsError, ToolPose, PRISMATIC_SCALE};
use crate::geometry::{rotation_vector, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DlsSettings {
    /// Damping constant λ, in normalized joint units.
    pub lambda: f64,
    /// Position tolerance (mm).
    pub tol: f64,
    /// Orientation tolerance (rad).
    pub tol_rot: f64,
    pub max_iter: usize,
    /// Largest normalized joint step per iteration.
    pub step_clamp: f64,
}

impl Default for DlsSettings {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            tol: 0.01,
            tol_rot: 1e-4,
            max_iter: 200,
            step_clamp: 0.1,
        }
    }
}

impl DlsSettings {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.lambda > 0.0 && self.tol > 0.0 && self.tol_rot > 0.0 && self.step_clamp > 0.0) || self.max_iter == 0 {
            return Err(KinematicsError::InvalidParameters(
                "DLS settings need lambda, tol, tol_rot, step_clamp > 0 and max_iter ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// `Δθ = Jᵀ(JJᵀ + λ²I)⁻¹e`, the minimizer of `‖JΔθ − e‖² + λ²‖Δθ‖²`.
pub fn dls_step(j: &DMatrix<f64>, e: &DVector<f64>, lambda: f64) -> Result<DVector<f64>, KinematicsError> {
    if !(lambda > 0.0) {
        return Err(KinematicsError::InvalidParameters("damping must be positive".into()));
    }
    let m = j * j.transpose() + DMatrix::identity(j.nrows(), j.nrows()) * (lambda * lambda);
    let chol = m
        .cholesky()
        .ok_or_else(|| KinematicsError::NumericalFailure("JJᵀ + λ²I is not positive definite".into()))?;
    Ok(j.transpose() * chol.solve(e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IkSolution {
    pub joints: JointVector,
    pub iterations: usize,
    pub position_error: f64,
    pub orientation_error: f64,
}

/// Task error `(target − tip, rotvec(R_target·Rᵀ))` in `/rc`.
fn pose_error(fk: &ToolPose, target: &RigidTransform) -> Vector6<f64> {
    let dp = target.translation() - fk.tip.coords;
    let dr = rotation_vector(&(target.rotation() * fk.pose.rotation().transpose()));
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

fn task_weight() -> Matrix6<f64> {
    let s = 1.0 / PRISMATIC_SCALE;
    Matrix6::from_diagonal(&Vector6::new(s, s, s, 1.0, 1.0, 1.0))
}

fn joint_scale() -> Matrix6<f64> {
    Matrix6::from_diagonal(&Vector6::new(1.0, 1.0, PRISMATIC_SCALE, 1.0, 1.0, 1.0))
}

/// Iterative pose IK. Each step is a damped least-squares update in
/// normalized units, clamped to `step_clamp` and projected onto the joint
/// limits.
pub fn ik_iterative(
    chain: &KinematicChain,
    target: &RigidTransform,
    initial: &JointVector,
    settings: &DlsSettings,
) -> Result<IkSolution, KinematicsError> {
    ik_iterative_traced(chain, target, initial, settings).0
}

/// [`ik_iterative`] plus the position residual (mm) at every iteration.
pub fn ik_iterative_traced(
    chain: &KinematicChain,
    target: &RigidTransform,
    initial: &JointVector,
    settings: &DlsSettings,
) -> (Result<IkSolution, KinematicsError>, Vec<f64>) {
    if let Err(e) = settings.validate() {
        return (Err(e), Vec::new());
    }
    let weight = task_weight();
    let scale = joint_scale();
    let mut q = chain.limits.clamp(initial);
    let mut trace = Vec::with_capacity(settings.max_iter);
    let mut best = (f64::INFINITY, q, 0.0, 0.0);

    for iter in 0..settings.max_iter {
        let fk = chain.forward_unchecked(&q);
        let e = pose_error(&fk, target);
        let pos_err = e.fixed_rows::<3>(0).norm();
        let rot_err = e.fixed_rows::<3>(3).norm();
        trace.push(pos_err);
        let weighted = (weight * e).norm();
        if weighted < best.0 {
            best = (weighted, q, pos_err, rot_err);
        }
        if pos_err < settings.tol && rot_err < settings.tol_rot {
            let sol = IkSolution {
                joints: q,
                iterations: iter + 1,
                position_error: pos_err,
                orientation_error: rot_err,
            };
            return (Ok(sol), trace);
        }
        let j = DMatrix::from_iterator(6, 6, (weight * chain.jacobian_unchecked(&q) * scale).iter().copied());
        let step = match dls_step(
            &j,
            &DVector::from_iterator(6, (weight * e).iter().copied()),
            settings.lambda,
        ) {
            Ok(s) => s,
            Err(err) => return (Err(err), trace),
        };
        let mut step = Vector6::from_iterator(step.iter().copied());
        let norm = step.norm();
        if norm > settings.step_clamp {
            step *= settings.step_clamp / norm;
        }
        q = chain.limits.clamp(&q.with_arm(&(q.arm() + scale * step)));
    }
    let err = KinematicsError::NoConvergence {
        iterations: settings.max_iter,
        position_error: best.2,
        orientation_error: best.3,
        best: best.1,
    };
    (Err(err), trace)
}

/// Orientation-only IK over the wrist joints with θ1, θ2, d3 held fixed.
///
/// Starts from the ZYX decomposition of the required wrist rotation and,
/// when that lies outside the limits, minimizes the remaining angle by
/// damped least squares on the wrist's angular Jacobian. Returns the wrist
/// angles and the residual angle (rad).
pub fn solve_wrist(
    chain: &KinematicChain,
    joints: &JointVector,
    target: &Matrix3<f64>,
    settings: &DlsSettings,
) -> ([f64; 3], f64) {
    const WRIST_TOL: f64 = 1e-13;
    let [a, b, c] = zyx_angles(&(shaft_rotation(joints.theta1, joints.theta2).transpose() * target));
    let wrap = |x: f64| (x + PI).rem_euclid(2.0 * PI) - PI;
    // Both ZYX branches, projected onto the limits; start from the closer one.
    let mut q = [[a, b, c], [wrap(a + PI), wrap(PI - b), wrap(c + PI)]]
        .iter()
        .map(|w| chain.limits.clamp(&joints.with_wrist(*w)))
        .map(|q| {
            let r = chain.forward_unchecked(&q).pose.rotation() * target.transpose();
            (rotation_vector(&r).norm(), q)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .map(|(_, q)| q)
        .unwrap_or(*joints);
    let mut best = ([q.theta4, q.theta5, q.theta6], f64::INFINITY);
    // Enough iterations to reach machine precision from a cold start.
    for _ in 0..settings.max_iter.max(200) {
        let fk = chain.forward_unchecked(&q);
        let e: Vector3<f64> = rotation_vector(&(target * fk.pose.rotation().transpose()));
        let err = e.norm();
        if err < best.1 {
            best = ([q.theta4, q.theta5, q.theta6], err);
        }
        if err < WRIST_TOL {
            break;
        }
        let j = chain.jacobian_unchecked(&q);
        let jw = DMatrix::from_fn(3, 3, |r, c| j[(3 + r, 3 + c)]);
        let Ok(step) = dls_step(&jw, &DVector::from_column_slice(e.as_slice()), settings.lambda) else {
            break;
        };
        let mut step = Vector3::new(step[0], step[1], step[2]);
        let norm = step.norm();
        if norm > settings.step_clamp * 5.0 {
            step *= settings.step_clamp * 5.0 / norm;
        }
        q = chain
            .limits
            .clamp(&q.with_wrist([q.theta4 + step.x, q.theta5 + step.y, q.theta6 + step.z]));
    }
    best
}

//! Grasp pose planning from the three needle markers.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::Serialize;

use super::ServoError;
use crate::geometry::{Point3, RigidTransform};
use crate::kinematics::{
    ik_analytic_position, select_solution, solve_wrist, DlsSettings, JointVector, KinematicChain, KinematicsError,
};
use crate::perception::{needle_plane_and_grasp_geometry, MIDDLE};

/// Residual allowed between the planned and the required tool orientation.
const ALIGNMENT_TOLERANCE: f64 = 1e-6;

/// Tilts of the pointing direction about the needle tangent tried when the
/// preferred one violates the wrist limits (degrees).
const TILT_SEQUENCE_DEG: [f64; 13] = [
    0.0, 10.0, -10.0, 20.0, -20.0, 30.0, -30.0, 45.0, -45.0, 60.0, -60.0, 75.0, -75.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraspPlan {
    /// Grasp point in `/rc`.
    pub p_pl: Point3,
    /// Joints reaching the grasp pose, grip open.
    pub joints: JointVector,
    /// Tool pose at the grasp, in `/rc`.
    pub tool_pose: RigidTransform,
    /// Needle tangent at the middle marker, in `/rc`.
    pub tangent: Vector3<f64>,
    /// Needle plane normal, in `/rc`.
    pub normal: Vector3<f64>,
    pub grip_open: f64,
    pub approach_standoff: f64,
    /// Angle between the jaw hinge axis and the needle tangent (rad).
    pub alignment_error: f64,
}

impl GraspPlan {
    /// Unit tool z axis, pointing from the jaws back up the instrument.
    pub fn retreat_axis(&self) -> Vector3<f64> {
        self.tool_pose.rotation().column(2).into_owned()
    }

    /// Point `height` mm back along the approach direction, in `/rc`.
    pub fn approach_point(&self, height: f64) -> Point3 {
        self.p_pl + self.retreat_axis() * height
    }

    pub fn approach_pose(&self, height: f64) -> RigidTransform {
        RigidTransform::from_rotation(
            Rotation3::from_matrix_unchecked(*self.tool_pose.rotation()),
            self.approach_point(height).coords,
        )
    }
}

/// Plans the grasp for markers given in `/ws` (tip, middle, tail order).
///
/// The grasp point is the middle marker projected onto the needle plane.
/// The jaw hinge axis is set parallel to the needle tangent, which keeps the
/// jaw-opening plane perpendicular to the tangent and so containing the
/// needle-plane normal. The remaining freedom, the pointing direction
/// within that plane, starts from the insertion direction projected onto
/// it. The shaft joints come from the analytic solution for the wrist
/// center and the wrist joints from an orientation-only solve.
pub fn plan_grasp(
    markers: &[Point3],
    chain: &KinematicChain,
    grip_open: f64,
    approach_standoff: f64,
    settings: &DlsSettings,
) -> Result<GraspPlan, ServoError> {
    let geo = needle_plane_and_grasp_geometry(markers)?;
    let rc = &chain.rc_from_ws;
    let p_pl = rc.apply(&geo.plane.project(&markers[MIDDLE]));
    let tangent = rc.apply_vector(&geo.tangent).normalize();
    let normal = rc.apply_vector(geo.plane.normal());

    let insertion = p_pl.coords.normalize();
    let base = insertion - tangent * insertion.dot(&tangent);
    let base = if base.norm() > 1e-6 { base.normalize() } else { normal };
    let tangent_axis = Unit::new_normalize(tangent);

    // Prefer the hinge sign that rolls the wrist least.
    let hinges = if tangent.dot(&shaft_x(&p_pl)) >= 0.0 {
        [tangent, -tangent]
    } else {
        [-tangent, tangent]
    };
    let mut last_err = KinematicsError::NoFeasibleSolution;
    for tilt in TILT_SEQUENCE_DEG {
        let z = -(Rotation3::from_axis_angle(&tangent_axis, tilt.to_radians()) * base);
        for hinge in hinges {
            let rotation = Matrix3::from_columns(&[hinge, z.cross(&hinge), z]);
            match solve_pose(chain, &p_pl, &rotation, settings) {
                Ok(joints) => {
                    let fk = chain.forward_unchecked(&joints);
                    let actual = fk.pose.rotation().column(0).into_owned();
                    return Ok(GraspPlan {
                        p_pl,
                        joints: joints.with_grip(grip_open),
                        tool_pose: RigidTransform::from_rotation(
                            Rotation3::from_matrix_unchecked(rotation),
                            p_pl.coords,
                        ),
                        tangent,
                        normal,
                        grip_open,
                        approach_standoff,
                        alignment_error: actual.angle(&tangent).min(actual.angle(&-tangent)),
                    });
                }
                Err(e) => last_err = e,
            }
        }
    }
    Err(last_err.into())
}

/// Shaft x axis for a tool pointing at `p` from the remote center.
fn shaft_x(p: &Point3) -> Vector3<f64> {
    let theta1 = (-p.x).atan2(-p.z);
    Vector3::new(theta1.cos(), 0.0, -theta1.sin())
}

fn solve_pose(
    chain: &KinematicChain,
    p_pl: &Point3,
    rotation: &Matrix3<f64>,
    settings: &DlsSettings,
) -> Result<JointVector, KinematicsError> {
    let wrist_center = p_pl + rotation.column(2) * chain.tool_length();
    let (a, b) = ik_analytic_position(&wrist_center)?;
    let shaft = select_solution(&a, &b, &chain.limits)?;
    let q = JointVector::default().with_position(&shaft);
    let (wrist, residual) = solve_wrist(chain, &q, rotation, settings);
    if residual > ALIGNMENT_TOLERANCE {
        return Err(KinematicsError::NoFeasibleSolution);
    }
    Ok(q.with_wrist(wrist))
}

//! Closed-form least-squares rigid registration of corresponding point sets.
//!
//! Two independent solvers are provided: Horn's unit-quaternion method
//! (eigenvector of the 4×4 symmetric matrix built from the cross-covariance)
//! and the SVD (Kabsch) method. Neither estimates scale.

use std::sync::Arc;

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};

use crate::geometry::{centroid, nearest_rotation, GeometryError, Point3, RigidTransform};
use crate::registry::Registry;

pub const HORN_QUATERNION: &str = "horn-quaternion";
pub const SVD_KABSCH: &str = "svd";

pub trait Registration: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns `T` minimizing `Σ‖dst_i − T·src_i‖²`.
    fn register(&self, src: &[Point3], dst: &[Point3]) -> Result<RigidTransform, GeometryError>;
}

/// Centroids and cross-covariance `Σ (src_i − s̄)(dst_i − d̄)ᵀ`, after
/// validating the input.
fn cross_covariance(src: &[Point3], dst: &[Point3]) -> Result<(Point3, Point3, Matrix3<f64>), GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::LengthMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(GeometryError::InsufficientPoints {
            needed: 3,
            got: src.len(),
        });
    }
    let (cs, cd) = (centroid(src), centroid(dst));
    let m = src
        .iter()
        .zip(dst)
        .fold(Matrix3::zeros(), |acc, (s, d)| acc + (s - cs) * (d - cd).transpose());
    let sv = m.singular_values();
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted[0] == 0.0 || sorted[1] / sorted[0] < 1e-9 {
        return Err(GeometryError::DegenerateConfiguration);
    }
    Ok((cs, cd, m))
}

#[derive(Debug, Default, Clone, Copy)]
pub struct HornQuaternion;

impl Registration for HornQuaternion {
    fn name(&self) -> &'static str {
        HORN_QUATERNION
    }

    fn register(&self, src: &[Point3], dst: &[Point3]) -> Result<RigidTransform, GeometryError> {
        let (cs, cd, s) = cross_covariance(src, dst)?;
        let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
        let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
        let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
        #[rustfmt::skip]
        let n = Matrix4::new(
            sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
            syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
            szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
            sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
        );
        let eig = n.symmetric_eigen();
        let q = eig.eigenvectors.column(eig.eigenvalues.imax());
        let rotation = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        let r = rotation.to_rotation_matrix();
        let translation = cd.coords - r * cs.coords;
        Ok(RigidTransform::from_rotation(r, translation))
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SvdKabsch;

impl Registration for SvdKabsch {
    fn name(&self) -> &'static str {
        SVD_KABSCH
    }

    fn register(&self, src: &[Point3], dst: &[Point3]) -> Result<RigidTransform, GeometryError> {
        let (cs, cd, m) = cross_covariance(src, dst)?;
        // R maximizes tr(R·M), i.e. the nearest rotation to Mᵀ.
        let r = nearest_rotation(&m.transpose());
        let translation: Vector3<f64> = cd.coords - r * cs.coords;
        RigidTransform::new(r, translation)
    }
}

/// Absolute orientation with the default (quaternion) solver.
pub fn absolute_orientation(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform, GeometryError> {
    HornQuaternion.register(src, dst)
}

pub fn builtin_registrations() -> Registry<dyn Registration> {
    let mut reg: Registry<dyn Registration> = Registry::new("registration");
    reg.register(HORN_QUATERNION, Arc::new(HornQuaternion));
    reg.register(SVD_KABSCH, Arc::new(SvdKabsch));
    reg
}

/// Root-mean-square of `‖dst_i − T·src_i‖`.
pub fn rms_residual(t: &RigidTransform, src: &[Point3], dst: &[Point3]) -> f64 {
    let sum: f64 = src.iter().zip(dst).map(|(s, d)| (d - t.apply(s)).norm_squared()).sum();
    (sum / src.len() as f64).sqrt()
}

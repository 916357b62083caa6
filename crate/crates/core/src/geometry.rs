//! Frame algebra, plane and circle fitting, and point-to-plane metrics.
//!
//! All lengths are millimetres and all angles radians. Rotations are stored
//! as 3×3 orthonormal matrices; quaternions only appear at conversion
//! boundaries.

use nalgebra::{DMatrix, Matrix3, Matrix4, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point3 = nalgebra::Point3<f64>;

/// Tolerance on `RᵀR = I` and `det R = 1` for a valid rigid transform.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Ratio of second to first singular value below which a point set is
/// treated as collinear.
pub const COLLINEAR_RATIO: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("points are collinear or coincident")]
    CollinearPoints,
    #[error("degenerate point configuration (cross-covariance rank < 2)")]
    DegenerateConfiguration,
    #[error("point sets differ in length ({src} vs {dst})")]
    LengthMismatch { src: usize, dst: usize },
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("matrix is not a proper rotation (orthonormality error {0:e})")]
    InvalidRotation(f64),
    #[error("non-finite coordinate")]
    NonFinite,
}

/// A rigid frame-to-frame map `p ↦ R·p + t`.
///
/// Naming follows `target_from_source`: `rc_from_ws.apply(p_ws)` yields the
/// point in the remote-center frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform after checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = (rotation.determinant() - 1.0).abs();
        if ortho > ROTATION_TOLERANCE || det > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidRotation(ortho.max(det)));
        }
        Ok(Self { rotation, translation })
    }

    /// Wraps a rotation that is already known to be orthonormal.
    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self::from_rotation(q.to_rotation_matrix(), translation)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation_z(angle: f64) -> Self {
        Self::from_rotation(Rotation3::from_axis_angle(&Vector3::z_axis(), angle), Vector3::zeros())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Rotates a free vector (no translation).
    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn invert(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Geodesic angle between the two rotations, in radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        rotation_angle(&(self.rotation.transpose() * other.rotation))
    }

    pub fn translation_distance_to(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Angle of a rotation matrix, robust near 0 and π.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let sin = 0.5 * skew.norm();
    let cos = 0.5 * (r.trace() - 1.0);
    sin.atan2(cos)
}

/// Rotation vector (axis · angle) of a rotation matrix.
///
/// Uses the skew-symmetric part away from π so small rotations keep full
/// relative precision.
pub fn rotation_vector(r: &Matrix3<f64>) -> Vector3<f64> {
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let angle = rotation_angle(r);
    if angle < 1e-8 {
        return 0.5 * skew;
    }
    if angle < std::f64::consts::PI - 1e-4 {
        return skew * (angle / (2.0 * angle.sin()));
    }
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let r = &self.rotation;
        TransformRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = TransformRepr::deserialize(deserializer)?;
        let r = Matrix3::from_fn(|i, j| repr.rotation[i][j]);
        RigidTransform::new(r, Vector3::from(repr.translation)).map_err(serde::de::Error::custom)
    }
}

/// Plane `n·p + d = 0` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    normal: Unit<Vector3<f64>>,
    offset: f64,
}

impl Plane {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Self {
        let norm = normal.norm();
        Self {
            normal: Unit::new_unchecked(normal / norm),
            offset: offset / norm,
        }
    }

    pub fn from_point_normal(point: &Point3, normal: Vector3<f64>) -> Self {
        let n = normal.normalize();
        Self::new(n, -n.dot(&point.coords))
    }

    pub fn normal(&self) -> &Vector3<f64> {
        self.normal.as_ref()
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&p.coords) + self.offset
    }

    pub fn project(&self, p: &Point3) -> Point3 {
        p - self.normal.as_ref() * self.signed_distance(p)
    }
}

/// Orthogonal distance `|nᵀp + d| / ‖n‖`.
pub fn point_plane_distance(plane: &Plane, p: &Point3) -> f64 {
    plane.signed_distance(p).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle3 {
    pub center: Point3,
    pub radius: f64,
    pub plane: Plane,
}

impl Circle3 {
    /// Unit tangent at `p` (assumed on the circle), oriented by the plane
    /// normal: `normal × (p − center)`.
    pub fn tangent_at(&self, p: &Point3) -> Vector3<f64> {
        self.plane.normal().cross(&(p - self.center)).normalize()
    }
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Point3::from(sum / points.len() as f64)
}

/// Singular values (descending) and right singular vectors of the centered
/// point matrix.
fn centered_svd(points: &[Point3]) -> (Point3, Vector3<f64>, Matrix3<f64>) {
    let c = centroid(points);
    let rows = points.len().max(3);
    let mut m = DMatrix::<f64>::zeros(rows, 3);
    for (i, p) in points.iter().enumerate() {
        let d = p - c;
        m[(i, 0)] = d.x;
        m[(i, 1)] = d.y;
        m[(i, 2)] = d.z;
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = Vector3::new(
        svd.singular_values[order[0]],
        svd.singular_values[order[1]],
        svd.singular_values[order[2]],
    );
    let v = Matrix3::from_fn(|i, j| v_t[(order[j], i)]);
    (c, sv, v)
}

fn is_collinear(sv: &Vector3<f64>) -> bool {
    sv[0] == 0.0 || sv[1] / sv[0] < COLLINEAR_RATIO
}

/// Total least-squares plane through `points`.
///
/// The normal is the right singular vector of the centered points with the
/// smallest singular value. Its sign makes `d ≥ 0`; when `d` vanishes the
/// lexicographically larger of `±n` is kept.
pub fn fit_plane(points: &[Point3]) -> Result<Plane, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::InsufficientPoints {
            needed: 3,
            got: points.len(),
        });
    }
    if !points.iter().all(|p| p.iter().all(|v| v.is_finite())) {
        return Err(GeometryError::NonFinite);
    }
    let (c, sv, v) = centered_svd(points);
    if is_collinear(&sv) {
        return Err(GeometryError::CollinearPoints);
    }
    let mut n: Vector3<f64> = v.column(2).normalize();
    let mut d = -n.dot(&c.coords);
    let scale = points.iter().map(|p| p.coords.amax()).fold(1.0, f64::max);
    if d.abs() <= 1e-12 * scale {
        d = 0.0;
        if lexicographic_less(&n, &-n) {
            n = -n;
        }
    } else if d < 0.0 {
        n = -n;
        d = -d;
    }
    Ok(Plane {
        normal: Unit::new_unchecked(n),
        offset: d,
    })
}

fn lexicographic_less(a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
    for i in 0..3 {
        if a[i] < b[i] {
            return true;
        }
        if a[i] > b[i] {
            return false;
        }
    }
    false
}

/// Mean orthogonal distance of `points` to their own best-fit plane.
pub fn mean_scan_distance(points: &[Point3]) -> Result<f64, GeometryError> {
    let plane = fit_plane(points)?;
    let total: f64 = points.iter().map(|p| point_plane_distance(&plane, p)).sum();
    Ok(total / points.len() as f64)
}

/// The unique circle through three non-collinear points.
pub fn circle_through_points(p1: &Point3, p2: &Point3, p3: &Point3) -> Result<Circle3, GeometryError> {
    let plane = fit_plane(&[*p1, *p2, *p3])?;
    let a = p1 - p3;
    let b = p2 - p3;
    let axb = a.cross(&b);
    let denom = 2.0 * axb.norm_squared();
    if denom == 0.0 {
        return Err(GeometryError::CollinearPoints);
    }
    let offset = (b * a.norm_squared() - a * b.norm_squared()).cross(&axb) / denom;
    let center = p3 + offset;
    Ok(Circle3 {
        center,
        radius: offset.norm(),
        plane,
    })
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Nearest rotation in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

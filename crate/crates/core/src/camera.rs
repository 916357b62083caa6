//! Pinhole stereo model: projection, DLT triangulation and chessboard
//! extrinsics.
//!
//! No lens distortion is modelled. The left camera defines the `/ee` frame;
//! the rig stores `ee_from_ws` (workspace to left camera) and the fixed
//! `right_from_left` offset.

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{nearest_rotation, Point3, RigidTransform};

/// Minimum camera-frame depth for a valid projection (mm).
pub const MIN_DEPTH: f64 = 1.0;
/// Minimum angle between the two back-projected rays.
pub const MIN_RAY_ANGLE_DEG: f64 = 0.01;
/// Fraction of the image size tolerated outside the sensor bounds.
pub const PIXEL_GUARD_BAND: f64 = 0.2;
/// Homography condition number above which extrinsics are refused.
pub const MAX_HOMOGRAPHY_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("point is behind the camera (depth {depth:.3} mm)")]
    BehindCamera { depth: f64 },
    #[error("rays are nearly parallel ({angle_deg:.5} deg)")]
    DegenerateRays { angle_deg: f64 },
    #[error("pixel ({u:.1}, {v:.1}) is outside the image guard band")]
    PixelOutOfBounds { u: f64, v: f64 },
    #[error("need at least 4 corners, got {0}")]
    InsufficientCorners(usize),
    #[error("expected {expected} corners, got {got}")]
    CornerCountMismatch { expected: usize, got: usize },
    #[error("homography is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("invalid camera parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, image_width: u32, image_height: u32) -> Result<Self, CameraError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            image_width,
            image_height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::InvalidParameters("focal lengths must be positive".into()));
        }
        if !(self.cx > 0.0 && self.cx < self.image_width as f64 && self.cy > 0.0 && self.cy < self.image_height as f64)
        {
            return Err(CameraError::InvalidParameters(
                "principal point outside the image".into(),
            ));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Pinhole projection of a camera-frame point.
    pub fn project(&self, p_cam: &Point3) -> Result<Pixel, CameraError> {
        if p_cam.z <= MIN_DEPTH {
            return Err(CameraError::BehindCamera { depth: p_cam.z });
        }
        Ok(Pixel {
            u: self.fx * p_cam.x / p_cam.z + self.cx,
            v: self.fy * p_cam.y / p_cam.z + self.cy,
        })
    }

    /// Normalized image coordinates `K⁻¹·(u, v, 1)`.
    pub fn normalize(&self, px: &Pixel) -> Vector3<f64> {
        Vector3::new((px.u - self.cx) / self.fx, (px.v - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.u >= 0.0 && px.v >= 0.0 && px.u < self.image_width as f64 && px.v < self.image_height as f64
    }

    fn within_guard_band(&self, px: &Pixel) -> bool {
        let (w, h) = (self.image_width as f64, self.image_height as f64);
        px.u.is_finite()
            && px.v.is_finite()
            && px.u >= -PIXEL_GUARD_BAND * w
            && px.u <= (1.0 + PIXEL_GUARD_BAND) * w
            && px.v >= -PIXEL_GUARD_BAND * h
            && px.v <= (1.0 + PIXEL_GUARD_BAND) * h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    left: CameraIntrinsics,
    right: CameraIntrinsics,
    right_from_left: RigidTransform,
    ee_from_ws: RigidTransform,
}

impl StereoRig {
    pub fn new(
        left: CameraIntrinsics,
        right: CameraIntrinsics,
        right_from_left: RigidTransform,
        ee_from_ws: RigidTransform,
    ) -> Result<Self, CameraError> {
        left.validate()?;
        right.validate()?;
        if !(right_from_left.translation().norm() > 0.0) {
            return Err(CameraError::InvalidParameters(
                "stereo baseline must be non-zero".into(),
            ));
        }
        Ok(Self {
            left,
            right,
            right_from_left,
            ee_from_ws,
        })
    }

    pub fn intrinsics(&self, side: Side) -> &CameraIntrinsics {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn right_from_left(&self) -> &RigidTransform {
        &self.right_from_left
    }

    pub fn ee_from_ws(&self) -> &RigidTransform {
        &self.ee_from_ws
    }

    pub fn baseline(&self) -> f64 {
        self.right_from_left.translation().norm()
    }

    /// Same cameras, different workspace registration.
    pub fn with_ee_from_ws(&self, ee_from_ws: RigidTransform) -> Self {
        Self { ee_from_ws, ..*self }
    }

    pub fn camera_from_ws(&self, side: Side) -> RigidTransform {
        match side {
            Side::Left => self.ee_from_ws,
            Side::Right => self.right_from_left.compose(&self.ee_from_ws),
        }
    }

    /// Camera center expressed in `/ws`.
    pub fn camera_center(&self, side: Side) -> Point3 {
        self.camera_from_ws(side).invert().apply(&Point3::origin())
    }

    /// Viewing ray direction (unit, `/ws`) through a pixel.
    pub fn ray_direction(&self, side: Side, px: &Pixel) -> Vector3<f64> {
        let r = self.camera_from_ws(side);
        r.rotation().transpose() * self.intrinsics(side).normalize(px).normalize()
    }

    pub fn project(&self, side: Side, p_ws: &Point3) -> Result<Pixel, CameraError> {
        let p_cam = self.camera_from_ws(side).apply(p_ws);
        self.intrinsics(side).project(&p_cam)
    }

    /// Projects into both cameras; `None` when either projection fails or
    /// lands outside the sensor.
    pub fn project_visible(&self, p_ws: &Point3) -> Option<(Pixel, Pixel)> {
        let l = self.project(Side::Left, p_ws).ok()?;
        let r = self.project(Side::Right, p_ws).ok()?;
        (self.left.contains(&l) && self.right.contains(&r)).then_some((l, r))
    }

    /// Linear (DLT) triangulation of a stereo correspondence into `/ws`.
    ///
    /// Pixels are first mapped to normalized image coordinates so each row
    /// of the 4×4 homogeneous system is on a comparable scale.
    pub fn triangulate(&self, left_px: &Pixel, right_px: &Pixel) -> Result<Point3, CameraError> {
        for (k, px) in [(&self.left, left_px), (&self.right, right_px)] {
            if !k.within_guard_band(px) {
                return Err(CameraError::PixelOutOfBounds { u: px.u, v: px.v });
            }
        }
        let angle = self
            .ray_direction(Side::Left, left_px)
            .angle(&self.ray_direction(Side::Right, right_px))
            .to_degrees();
        if angle < MIN_RAY_ANGLE_DEG {
            return Err(CameraError::DegenerateRays { angle_deg: angle });
        }
        // Solve in the left camera frame scaled by a rough depth so the
        // homogeneous coordinate and the point coordinates are of similar
        // magnitude; the algebraic solution is badly biased otherwise.
        let scale = (angle.to_radians() / self.baseline()).max(f64::EPSILON);
        let right = self.right_from_left;
        let cams = [
            (Side::Left, projection_matrix(&RigidTransform::identity())),
            (
                Side::Right,
                projection_matrix(&RigidTransform::from_rotation(
                    nalgebra::Rotation3::from_matrix_unchecked(*right.rotation()),
                    right.translation() * scale,
                )),
            ),
        ];
        let mut a = Matrix4::zeros();
        for (i, (side, p)) in cams.iter().enumerate() {
            let px = if *side == Side::Left { left_px } else { right_px };
            let x = self.intrinsics(*side).normalize(px);
            a.set_row(2 * i, &(p.row(2) * x.x - p.row(0)));
            a.set_row(2 * i + 1, &(p.row(2) * x.y - p.row(1)));
        }
        let svd = a.svd(false, true);
        let v_t = svd.v_t.expect("requested V");
        let h: Vector4<f64> = v_t.row(svd.singular_values.imin()).transpose();
        if h.w.abs() < f64::EPSILON {
            return Err(CameraError::DegenerateRays { angle_deg: angle });
        }
        let p_ee = Point3::new(h.x, h.y, h.z) / (h.w * scale);
        Ok(self.ee_from_ws.invert().apply(&p_ee))
    }

    /// Euclidean pixel distance between the projection of `p_ws` and an
    /// observation.
    pub fn reprojection_error(&self, side: Side, p_ws: &Point3, observed: &Pixel) -> Result<f64, CameraError> {
        Ok(self.project(side, p_ws)?.distance(observed))
    }
}

fn projection_matrix(cam_from_ws: &RigidTransform) -> Matrix3x4<f64> {
    let mut p = Matrix3x4::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(cam_from_ws.rotation());
    p.set_column(3, cam_from_ws.translation());
    p
}

/// Planar chessboard whose inner corners define the workspace frame:
/// corners lie on `z = 0`, centered on the origin, row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chessboard {
    pub rows: usize,
    pub cols: usize,
    pub square_size: f64,
}

impl Chessboard {
    pub fn new(rows: usize, cols: usize, square_size: f64) -> Result<Self, CameraError> {
        let b = Self {
            rows,
            cols,
            square_size,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if self.rows < 2 || self.cols < 2 || !(self.square_size > 0.0) {
            return Err(CameraError::InvalidParameters(
                "chessboard needs ≥2×2 corners and positive squares".into(),
            ));
        }
        Ok(())
    }

    pub fn corner_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn corners(&self) -> Vec<Point3> {
        let (r0, c0) = ((self.rows - 1) as f64 / 2.0, (self.cols - 1) as f64 / 2.0);
        (0..self.rows)
            .flat_map(|i| {
                (0..self.cols).map(move |j| {
                    Point3::new(
                        (j as f64 - c0) * self.square_size,
                        (i as f64 - r0) * self.square_size,
                        0.0,
                    )
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtrinsicEstimate {
    pub ee_from_ws: RigidTransform,
    /// RMS reprojection error over all corners (pixels).
    pub reprojection_rms: f64,
    pub homography_condition: f64,
}

/// Hartley normalization: centroid to origin, mean distance √2.
fn normalizing_transform(pts: &[(f64, f64)]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let mean_dist = pts.iter().map(|(x, y)| (x - mx).hypot(y - my)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

/// Homography from board-plane `(X, Y)` to normalized image coordinates.
fn board_homography(board: &[(f64, f64)], image: &[(f64, f64)]) -> (Matrix3<f64>, f64) {
    let tb = normalizing_transform(board);
    let ti = normalizing_transform(image);
    let rows = (2 * board.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (b, i)) in board.iter().zip(image).enumerate() {
        let bn = tb * Vector3::new(b.0, b.1, 1.0);
        let im = ti * Vector3::new(i.0, i.1, 1.0);
        let (x, y) = (bn.x / bn.z, bn.y / bn.z);
        let (u, v) = (im.x / im.z, im.y / im.z);
        let r0 = 2 * k;
        let r1 = r0 + 1;
        a[(r0, 3)] = -x;
        a[(r0, 4)] = -y;
        a[(r0, 5)] = -1.0;
        a[(r0, 6)] = v * x;
        a[(r0, 7)] = v * y;
        a[(r0, 8)] = v;
        a[(r1, 0)] = x;
        a[(r1, 1)] = y;
        a[(r1, 2)] = 1.0;
        a[(r1, 6)] = -u * x;
        a[(r1, 7)] = -u * y;
        a[(r1, 8)] = -u;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let h = v_t.row(svd.singular_values.imin());
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let sv = hn.singular_values();
    let cond = sv.max() / sv.min();
    let ti_inv = ti.try_inverse().expect("normalizing transform is invertible");
    (ti_inv * hn * tb, cond)
}

/// Pose of the chessboard (`/ws`) in the camera frame from one view.
///
/// A DLT homography from the board plane to normalized image coordinates
/// is decomposed into `[r1 r2 t]`, the third axis completed by `r1 × r2`
/// and the result projected onto the nearest rotation.
pub fn estimate_extrinsics(
    board: &Chessboard,
    corners_px: &[Pixel],
    intrinsics: &CameraIntrinsics,
) -> Result<ExtrinsicEstimate, CameraError> {
    if corners_px.len() < 4 {
        return Err(CameraError::InsufficientCorners(corners_px.len()));
    }
    if corners_px.len() != board.corner_count() {
        return Err(CameraError::CornerCountMismatch {
            expected: board.corner_count(),
            got: corners_px.len(),
        });
    }
    let object = board.corners();
    let plane: Vec<(f64, f64)> = object.iter().map(|p| (p.x, p.y)).collect();
    let image: Vec<(f64, f64)> = corners_px
        .iter()
        .map(|px| {
            let n = intrinsics.normalize(px);
            (n.x, n.y)
        })
        .collect();
    let (h, cond) = board_homography(&plane, &image);
    if !cond.is_finite() || cond > MAX_HOMOGRAPHY_CONDITION {
        return Err(CameraError::IllConditioned(cond));
    }
    let (h1, h2, h3) = (
        h.column(0).into_owned(),
        h.column(1).into_owned(),
        h.column(2).into_owned(),
    );
    let mut scale = 2.0 / (h1.norm() + h2.norm());
    if h3.z * scale < 0.0 {
        scale = -scale;
    }
    let r1 = h1 * scale;
    let r2 = h2 * scale;
    let r = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]));
    let ee_from_ws = RigidTransform::new(r, h3 * scale).map_err(|e| CameraError::InvalidParameters(e.to_string()))?;
    let sq: f64 = object
        .iter()
        .zip(corners_px)
        .map(|(p, obs)| match intrinsics.project(&ee_from_ws.apply(p)) {
            Ok(px) => px.distance(obs).powi(2),
            Err(_) => f64::INFINITY,
        })
        .sum();
    Ok(ExtrinsicEstimate {
        ee_from_ws,
        reprojection_rms: (sq / object.len() as f64).sqrt(),
        homography_condition: cond,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_angle;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(1000.0, 1000.0, 360.0, 288.0, 720, 576).unwrap()
    }

    /// Left camera 100 mm above the workspace origin looking straight down.
    fn rig() -> StereoRig {
        let look_down = Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI);
        let ee_from_ws = RigidTransform::from_rotation(look_down, Vector3::new(0.0, 0.0, 100.0));
        StereoRig::new(
            intrinsics(),
            intrinsics(),
            RigidTransform::from_translation(Vector3::new(-4.3, 0.0, 0.0)),
            ee_from_ws,
        )
        .unwrap()
    }

    #[test]
    fn project_examples() {
        let r = rig();
        let px = r.project(Side::Left, &Point3::new(0.0, 0.0, 0.0)).unwrap();
        assert!((px.u - 360.0).abs() < 1e-12 && (px.v - 288.0).abs() < 1e-12);

        let k = CameraIntrinsics::new(1000.0, 1000.0, 500.0, 500.0, 1000, 1000).unwrap();
        let px = k.project(&Point3::new(10.0, 0.0, 100.0)).unwrap();
        assert_eq!((px.u, px.v), (600.0, 500.0));
        assert!(matches!(
            k.project(&Point3::new(1.0, 1.0, 0.0)),
            Err(CameraError::BehindCamera { .. })
        ));
    }

    #[test]
    fn zero_baseline_is_rejected() {
        let k = intrinsics();
        let r = StereoRig::new(k, k, RigidTransform::identity(), RigidTransform::identity());
        assert!(matches!(r, Err(CameraError::InvalidParameters(_))));
    }

    #[test]
    fn triangulation_round_trip() {
        let r = rig();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..1000 {
            let p = Point3::new(
                rng.random_range(-18.0..18.0),
                rng.random_range(-15.0..15.0),
                rng.random_range(-10.0..40.0),
            );
            let (l, rr) = r.project_visible(&p).expect("inside frustum");
            let q = r.triangulate(&l, &rr).unwrap();
            assert!((p - q).norm() < 1e-6, "{p} vs {q}");
        }
    }

    #[test]
    fn triangulation_guards() {
        let r = rig();
        let far = Pixel::new(5000.0, 10.0);
        assert!(matches!(
            r.triangulate(&far, &far),
            Err(CameraError::PixelOutOfBounds { .. })
        ));
        // Both rays parallel to the optical axis never meet.
        let l = Pixel::new(360.0, 288.0);
        let rr = Pixel::new(360.0, 288.0);
        assert!(matches!(
            r.triangulate(&l, &rr),
            Err(CameraError::DegenerateRays { .. })
        ));
    }

    /// First-order depth noise for a rectified pair: σ_Z = Z²/(f·b)·√2·σ_px.
    fn analytic_depth_sigma(depth: f64, sigma_px: f64) -> f64 {
        depth * depth / (1000.0 * 4.3) * std::f64::consts::SQRT_2 * sigma_px
    }

    fn empirical_errors(r: &StereoRig, p: &Point3, sigma: f64, trials: usize, seed: u64) -> (f64, f64) {
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l, rr) = r.project_visible(p).unwrap();
        let cam = r.ee_from_ws();
        let (mut axial, mut lateral) = (0.0, 0.0);
        for _ in 0..trials {
            let ln = Pixel::new(l.u + noise.sample(&mut rng), l.v + noise.sample(&mut rng));
            let rn = Pixel::new(rr.u + noise.sample(&mut rng), rr.v + noise.sample(&mut rng));
            let q = r.triangulate(&ln, &rn).unwrap();
            let d = cam.apply_vector(&(q - p));
            axial += d.z * d.z;
            lateral += 0.5 * (d.x * d.x + d.y * d.y);
        }
        ((axial / trials as f64).sqrt(), (lateral / trials as f64).sqrt())
    }

    #[test]
    fn depth_noise_matches_first_order_propagation() {
        let r = rig();
        for (depth, seed) in [(60.0, 21), (100.0, 22)] {
            let p = Point3::new(0.5, 0.5, 100.0 - depth);
            let (axial, lateral) = empirical_errors(&r, &p, 0.5, 1000, seed);
            let expected = analytic_depth_sigma(depth, 0.5);
            assert!(
                (axial - expected).abs() / expected < 0.25,
                "depth {depth}: {axial} vs {expected}"
            );
            assert!(axial > lateral);
        }
        let (near, _) = empirical_errors(&r, &Point3::new(0.5, 0.5, 40.0), 0.5, 1000, 23);
        let (far, _) = empirical_errors(&r, &Point3::new(0.5, 0.5, 0.0), 0.5, 1000, 23);
        let ratio = far / near;
        let expected = (100.0f64 / 60.0).powi(2);
        assert!((ratio - expected).abs() / expected < 0.25, "ratio {ratio}");
    }

    fn board_pose() -> RigidTransform {
        RigidTransform::from_rotation(
            Rotation3::from_euler_angles(std::f64::consts::PI + 0.15, -0.1, 0.3),
            Vector3::new(3.0, -2.0, 110.0),
        )
    }

    #[test]
    fn extrinsics_noiseless_recovery() {
        let board = Chessboard::new(5, 7, 10.0).unwrap();
        let truth = board_pose();
        let k = intrinsics();
        let px: Vec<Pixel> = board
            .corners()
            .iter()
            .map(|p| k.project(&truth.apply(p)).unwrap())
            .collect();
        let est = estimate_extrinsics(&board, &px, &k).unwrap();
        assert!(est.ee_from_ws.rotation_angle_to(&truth) < 1e-6);
        assert!(est.ee_from_ws.translation_distance_to(&truth) < 1e-6);
        assert!(est.reprojection_rms < 1e-9);
        let truth_rms = {
            let s: f64 = board
                .corners()
                .iter()
                .zip(&px)
                .map(|(p, o)| k.project(&truth.apply(p)).unwrap().distance(o).powi(2))
                .sum();
            (s / px.len() as f64).sqrt()
        };
        assert!(est.reprojection_rms <= truth_rms + 1e-9);
    }

    #[test]
    fn extrinsics_with_four_corners() {
        let board = Chessboard::new(2, 2, 10.0).unwrap();
        let truth = board_pose();
        let k = intrinsics();
        let px: Vec<Pixel> = board
            .corners()
            .iter()
            .map(|p| k.project(&truth.apply(p)).unwrap())
            .collect();
        let est = estimate_extrinsics(&board, &px, &k).unwrap();
        assert!(rotation_angle(&(est.ee_from_ws.rotation().transpose() * truth.rotation())) < 1e-6);
        assert!(est.ee_from_ws.translation_distance_to(&truth) < 1e-6);
    }

    #[test]
    fn extrinsics_errors() {
        let board = Chessboard::new(5, 7, 10.0).unwrap();
        let k = intrinsics();
        let three = vec![Pixel::new(1.0, 1.0); 3];
        assert_eq!(
            estimate_extrinsics(&board, &three, &k),
            Err(CameraError::InsufficientCorners(3))
        );
        let ten = vec![Pixel::new(1.0, 1.0); 10];
        assert!(matches!(
            estimate_extrinsics(&board, &ten, &k),
            Err(CameraError::CornerCountMismatch { .. })
        ));
        // All corners on one image line: the homography is rank-deficient.
        let line: Vec<Pixel> = (0..35).map(|i| Pixel::new(100.0 + i as f64, 200.0)).collect();
        assert!(matches!(
            estimate_extrinsics(&board, &line, &k),
            Err(CameraError::IllConditioned(_))
        ));
    }

    #[test]
    fn reprojection_error_examples() {
        let r = rig();
        let p = Point3::new(2.0, -3.0, 10.0);
        let px = r.project(Side::Right, &p).unwrap();
        assert_eq!(r.reprojection_error(Side::Right, &p, &px).unwrap(), 0.0);
        let off = Pixel::new(px.u + 3.0, px.v + 4.0);
        assert!((r.reprojection_error(Side::Right, &p, &off).unwrap() - 5.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..50 {
            let (du, dv) = (rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
            let obs = Pixel::new(px.u + du, px.v + dv);
            let e = r.reprojection_error(Side::Right, &p, &obs).unwrap();
            assert!((e - (du * du + dv * dv).sqrt()).abs() < 1e-9);
        }
    }
}

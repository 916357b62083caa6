//! Synthetic stereo marker tracking and needle reconstruction.
//!
//! The needle carries three markers (tip-side, middle, tail-side). The
//! tracker projects them into both cameras at the tracker rate and adds
//! pixel noise, random dropouts, visibility dropouts and an optional
//! tool-shaft occlusion.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraError, Pixel, Side, StereoRig};
use crate::geometry::{circle_through_points, fit_plane, Circle3, GeometryError, Plane, Point3, RigidTransform};

pub const TIP: usize = 0;
pub const MIDDLE: usize = 1;
pub const TAIL: usize = 2;
pub const MARKER_COUNT: usize = 3;

/// Marker angles on the needle arc, tip-side first (degrees).
pub const DEFAULT_MARKER_ANGLES_DEG: [f64; 3] = [150.0, 90.0, 30.0];

/// Smallest turning angle between the two marker chords before the markers
/// are treated as collinear.
pub const MIN_MARKER_BEND_DEG: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("need all 3 markers, got {got}")]
    InsufficientMarkers { got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("invalid perception parameters: {0}")]
    InvalidParameters(String),
}

/// A half-circle needle. The needle frame has the arc center at its origin
/// and the arc in its xy-plane, spanning angles `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeedleState {
    pub radius: f64,
    /// `ws_from_needle`.
    pub pose: RigidTransform,
    pub markers: [Point3; 3],
    marker_angles: [f64; 3],
}

impl NeedleState {
    pub fn new(pose: RigidTransform, radius: f64, marker_angles_deg: [f64; 3]) -> Result<Self, PerceptionError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(PerceptionError::InvalidParameters(
                "needle radius must be positive".into(),
            ));
        }
        let angles = marker_angles_deg.map(f64::to_radians);
        for (i, a) in angles.iter().enumerate() {
            if !(0.0..=std::f64::consts::PI).contains(a) {
                return Err(PerceptionError::InvalidParameters(
                    "marker angles must lie on the arc [0°, 180°]".into(),
                ));
            }
            if angles[..i].iter().any(|b| (a - b).abs() < 1e-9) {
                return Err(PerceptionError::InvalidParameters(
                    "marker angles must be distinct".into(),
                ));
            }
        }
        let mut state = Self {
            radius,
            pose,
            markers: [Point3::origin(); 3],
            marker_angles: angles,
        };
        state.markers = angles.map(|a| state.arc_point(a));
        Ok(state)
    }

    pub fn with_pose(&self, pose: RigidTransform) -> Self {
        let mut s = Self { pose, ..*self };
        s.markers = self.marker_angles.map(|a| s.arc_point(a));
        s
    }

    pub fn middle(&self) -> Point3 {
        self.markers[MIDDLE]
    }

    /// Point of the needle circle at angle `phi` (rad), in `/ws`.
    pub fn arc_point(&self, phi: f64) -> Point3 {
        let (s, c) = phi.sin_cos();
        self.pose.apply(&Point3::new(self.radius * c, self.radius * s, 0.0))
    }

    /// Distance from `p` (in `/ws`) to the needle arc.
    pub fn distance_to_arc(&self, p: &Point3) -> f64 {
        let q = self.pose.invert().apply(p);
        let phi = q.y.atan2(q.x);
        if (0.0..=std::f64::consts::PI).contains(&phi) {
            let rho = q.x.hypot(q.y);
            (rho - self.radius).hypot(q.z)
        } else {
            let ends = [self.arc_point(0.0), self.arc_point(std::f64::consts::PI)];
            ends.iter().map(|e| (e - p).norm()).fold(f64::INFINITY, f64::min)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Std of the i.i.d. Gaussian noise on each pixel coordinate (px).
    pub pixel_sigma: f64,
    /// Probability that a marker goes undetected in a tracker frame.
    pub dropout_prob: f64,
    /// Std of a per-trial disparity offset (px), split evenly between the
    /// two images. Models a systematic stereo matching error, which shows
    /// up almost entirely along the optical axis.
    pub disparity_bias_sigma: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.0,
            dropout_prob: 0.0,
            disparity_bias_sigma: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.pixel_sigma >= 0.0 && self.disparity_bias_sigma >= 0.0) {
            return Err(PerceptionError::InvalidParameters("noise sigmas must be ≥ 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(PerceptionError::InvalidParameters(
                "dropout_prob must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    pub camera_hz: f64,
    pub tracker_hz: f64,
    pub control_hz: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            camera_hz: 25.0,
            tracker_hz: 8.0,
            control_hz: 100.0,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.camera_hz > 0.0 && self.tracker_hz > 0.0 && self.control_hz > 0.0) {
            return Err(PerceptionError::InvalidParameters("rates must be positive".into()));
        }
        if self.tracker_hz > self.camera_hz {
            return Err(PerceptionError::InvalidParameters(
                "tracker_hz must not exceed camera_hz".into(),
            ));
        }
        Ok(())
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_hz
    }

    pub fn tracker_period(&self) -> f64 {
        1.0 / self.tracker_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkerDetection {
    pub marker_id: usize,
    pub left_px: Pixel,
    pub right_px: Pixel,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DropReason {
    /// Random tracking loss.
    Random,
    /// Outside either camera's field of view, or behind it.
    Visibility,
    /// Hidden behind the tool shaft.
    Occluded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackerFrame {
    pub tick: u64,
    pub timestamp: f64,
    pub detections: Vec<MarkerDetection>,
    pub dropped: Vec<(usize, DropReason)>,
}

/// A capsule (segment with radius) in `/ws` that can hide markers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Point3,
    pub b: Point3,
    pub radius: f64,
}

impl Capsule {
    /// Whether the segment `p`–`q` passes through the capsule.
    pub fn blocks(&self, p: &Point3, q: &Point3) -> bool {
        segment_distance(p, q, &self.a, &self.b) < self.radius
    }
}

/// Minimum distance between segments `p1`–`q1` and `p2`–`q2`.
fn segment_distance(p1: &Point3, q1: &Point3, p2: &Point3, q2: &Point3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t) = if a <= f64::EPSILON && e <= f64::EPSILON {
        (0.0, 0.0)
    } else if a <= f64::EPSILON {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&r);
        if e <= f64::EPSILON {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

/// Seeded marker detector emitting one frame per tracker tick.
///
/// Every tick consumes the same number of random draws regardless of
/// visibility, so streams stay aligned across scenarios with the same seed.
#[derive(Debug, Clone)]
pub struct SyntheticTracker {
    noise: NoiseModel,
    rates: RateConfig,
    rng: ChaCha8Rng,
    disparity_bias: f64,
    last_tick: Option<u64>,
}

impl SyntheticTracker {
    pub fn new(noise: NoiseModel, rates: RateConfig, seed: u64) -> Result<Self, PerceptionError> {
        noise.validate()?;
        rates.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: f64 = rng.sample(StandardNormal);
        Ok(Self {
            noise,
            rates,
            rng,
            disparity_bias: z * noise.disparity_bias_sigma,
            last_tick: None,
        })
    }

    /// Disparity offset drawn for this tracker (px).
    pub fn disparity_bias(&self) -> f64 {
        self.disparity_bias
    }

    /// Observes the needle at time `t`. Returns a frame only when `t` has
    /// crossed into a new tracker tick.
    pub fn observe(
        &mut self,
        needle: &NeedleState,
        rig: &StereoRig,
        t: f64,
        occluder: Option<&Capsule>,
    ) -> Option<TrackerFrame> {
        let tick = (t * self.rates.tracker_hz + 1e-9).floor().max(0.0) as u64;
        if self.last_tick.is_some_and(|last| tick <= last) {
            return None;
        }
        self.last_tick = Some(tick);
        let mut detections = Vec::with_capacity(MARKER_COUNT);
        let mut dropped = Vec::new();
        let centers = [rig.camera_center(Side::Left), rig.camera_center(Side::Right)];
        for (id, marker) in needle.markers.iter().enumerate() {
            let drop_draw: f64 = self.rng.random();
            let n: [f64; 4] = std::array::from_fn(|_| self.rng.sample::<f64, _>(StandardNormal));
            if drop_draw < self.noise.dropout_prob {
                dropped.push((id, DropReason::Random));
                continue;
            }
            let Some((l, r)) = rig.project_visible(marker) else {
                dropped.push((id, DropReason::Visibility));
                continue;
            };
            if occluder.is_some_and(|c| centers.iter().any(|o| c.blocks(o, marker))) {
                dropped.push((id, DropReason::Occluded));
                continue;
            }
            let s = self.noise.pixel_sigma;
            let half = 0.5 * self.disparity_bias;
            detections.push(MarkerDetection {
                marker_id: id,
                left_px: Pixel::new(l.u + s * n[0] + half, l.v + s * n[1]),
                right_px: Pixel::new(r.u + s * n[2] - half, r.v + s * n[3]),
                timestamp: t,
            });
        }
        Some(TrackerFrame {
            tick,
            timestamp: t,
            detections,
            dropped,
        })
    }
}

/// Noise-free detections of every marker visible in both cameras.
pub fn observe_exact(needle: &NeedleState, rig: &StereoRig, t: f64) -> Vec<MarkerDetection> {
    needle
        .markers
        .iter()
        .enumerate()
        .filter_map(|(id, m)| {
            rig.project_visible(m).map(|(l, r)| MarkerDetection {
                marker_id: id,
                left_px: l,
                right_px: r,
                timestamp: t,
            })
        })
        .collect()
}

/// Triangulated marker positions in `/ws`; `None` where a marker was not
/// detected or could not be triangulated.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerEstimate {
    pub timestamp: f64,
    pub positions: [Option<Point3>; 3],
    pub failures: Vec<(usize, CameraError)>,
}

impl MarkerEstimate {
    pub fn count(&self) -> usize {
        self.positions.iter().flatten().count()
    }

    /// All three markers, or `InsufficientMarkers`.
    pub fn complete(&self) -> Result<[Point3; 3], PerceptionError> {
        match self.positions {
            [Some(a), Some(b), Some(c)] => Ok([a, b, c]),
            _ => Err(PerceptionError::InsufficientMarkers { got: self.count() }),
        }
    }
}

pub fn reconstruct_markers(detections: &[MarkerDetection], rig: &StereoRig) -> MarkerEstimate {
    let mut est = MarkerEstimate {
        timestamp: detections.iter().map(|d| d.timestamp).fold(f64::NEG_INFINITY, f64::max),
        positions: [None; 3],
        failures: Vec::new(),
    };
    for d in detections.iter().filter(|d| d.marker_id < MARKER_COUNT) {
        match rig.triangulate(&d.left_px, &d.right_px) {
            Ok(p) => est.positions[d.marker_id] = Some(p),
            Err(e) => est.failures.push((d.marker_id, e)),
        }
    }
    est
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeedleGeometry {
    pub plane: Plane,
    pub circle: Circle3,
    /// Unit tangent at the middle marker, pointing from the tail-side
    /// toward the tip-side marker.
    pub tangent: Vector3<f64>,
}

/// Needle plane, circle and middle-marker tangent from the markers, given
/// in tip, middle, tail order.
pub fn needle_plane_and_grasp_geometry(markers: &[Point3]) -> Result<NeedleGeometry, PerceptionError> {
    let [tip, mid, tail] = match markers {
        [a, b, c] => [*a, *b, *c],
        _ => return Err(PerceptionError::InsufficientMarkers { got: markers.len() }),
    };
    let (u, v) = (mid - tail, tip - mid);
    if u.norm() < 1e-9 || v.norm() < 1e-9 || u.angle(&v).to_degrees() < MIN_MARKER_BEND_DEG {
        return Err(GeometryError::CollinearPoints.into());
    }
    let plane = fit_plane(markers)?;
    let circle = circle_through_points(&tip, &mid, &tail)?;
    let mut tangent = circle.tangent_at(&mid);
    if tangent.dot(&(tip - tail)) < 0.0 {
        tangent = -tangent;
    }
    Ok(NeedleGeometry { plane, circle, tangent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraIntrinsics;
    use std::f64::consts::FRAC_1_SQRT_2;

    /// Left camera 95 mm above the needle, looking down the workspace -z.
    pub(crate) fn rig() -> StereoRig {
        let k = CameraIntrinsics::new(1000.0, 1000.0, 360.0, 288.0, 720, 576).unwrap();
        let ee_from_ws = RigidTransform::new(
            nalgebra::Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0),
            Vector3::new(0.0, 0.0, 115.0),
        )
        .unwrap();
        StereoRig::new(
            k,
            k,
            RigidTransform::from_translation(Vector3::new(-4.3, 0.0, 0.0)),
            ee_from_ws,
        )
        .unwrap()
    }

    fn needle() -> NeedleState {
        NeedleState::new(
            RigidTransform::from_translation(Vector3::new(0.0, 0.0, 20.0)),
            12.0,
            DEFAULT_MARKER_ANGLES_DEG,
        )
        .unwrap()
    }

    #[test]
    fn needle_markers_on_circle() {
        let n = needle();
        for m in &n.markers {
            assert!(((m - Point3::new(0.0, 0.0, 20.0)).norm() - 12.0).abs() < 1e-12);
            assert!(n.distance_to_arc(m) < 1e-12);
        }
        assert!((n.distance_to_arc(&Point3::new(0.0, 0.0, 20.0)) - 12.0).abs() < 1e-12);
        assert!((n.distance_to_arc(&Point3::new(0.0, 12.0, 23.0)) - 3.0).abs() < 1e-12);
        // Below the arc's open side: nearest point is an endpoint.
        assert!((n.distance_to_arc(&Point3::new(12.0, -5.0, 20.0)) - 5.0).abs() < 1e-12);
        assert!(NeedleState::new(RigidTransform::identity(), 12.0, [90.0, 90.0, 30.0]).is_err());
    }

    #[test]
    fn zero_noise_detections_are_exact() {
        let r = rig();
        let n = needle();
        let mut tracker = SyntheticTracker::new(NoiseModel::default(), RateConfig::default(), 7).unwrap();
        let frame = tracker.observe(&n, &r, 0.0, None).unwrap();
        assert_eq!(frame.detections, observe_exact(&n, &r, 0.0));
        assert_eq!(frame.detections.len(), 3);
        let est = reconstruct_markers(&frame.detections, &r);
        for (p, truth) in est.complete().unwrap().iter().zip(&n.markers) {
            assert!((p - truth).norm() < 1e-6);
        }
    }

    #[test]
    fn emits_only_on_tracker_ticks() {
        let r = rig();
        let n = needle();
        let rates = RateConfig::default();
        let mut tracker = SyntheticTracker::new(NoiseModel::default(), rates, 7).unwrap();
        let steps = 1000;
        let frames = (0..steps)
            .filter(|k| tracker.observe(&n, &r, *k as f64 * rates.control_dt(), None).is_some())
            .count();
        let expected = (steps as f64 * rates.control_dt() * rates.tracker_hz).floor() as usize;
        assert!(frames.abs_diff(expected) <= 1, "{frames} vs {expected}");
        assert!(frames <= (steps as f64 * rates.control_dt() * rates.camera_hz) as usize);
    }

    #[test]
    fn marker_behind_camera_drops_out() {
        let r = rig();
        let mut n = needle();
        n.markers[TAIL] = Point3::new(0.0, 0.0, 200.0);
        let mut tracker = SyntheticTracker::new(NoiseModel::default(), RateConfig::default(), 1).unwrap();
        let frame = tracker.observe(&n, &r, 0.0, None).unwrap();
        assert_eq!(frame.detections.len(), 2);
        assert_eq!(frame.dropped, vec![(TAIL, DropReason::Visibility)]);
        let est = reconstruct_markers(&frame.detections, &r);
        assert_eq!(est.count(), 2);
        assert_eq!(est.complete(), Err(PerceptionError::InsufficientMarkers { got: 2 }));
        let pts: Vec<Point3> = est.positions.iter().flatten().copied().collect();
        assert_eq!(
            needle_plane_and_grasp_geometry(&pts),
            Err(PerceptionError::InsufficientMarkers { got: 2 })
        );
    }

    #[test]
    fn occluder_hides_marker() {
        let r = rig();
        let n = needle();
        let mid = n.middle();
        let shaft = Capsule {
            a: mid + Vector3::new(-20.0, 0.0, 10.0),
            b: mid + Vector3::new(20.0, 0.0, 10.0),
            radius: 4.0,
        };
        let mut tracker = SyntheticTracker::new(NoiseModel::default(), RateConfig::default(), 1).unwrap();
        let frame = tracker.observe(&n, &r, 0.0, Some(&shaft)).unwrap();
        assert_eq!(frame.dropped, vec![(MIDDLE, DropReason::Occluded)]);
    }

    #[test]
    fn empirical_pixel_noise() {
        let r = rig();
        let n = needle();
        let noise = NoiseModel {
            pixel_sigma: 0.5,
            ..Default::default()
        };
        let rates = RateConfig::default();
        let mut tracker = SyntheticTracker::new(noise, rates, 11).unwrap();
        let exact = observe_exact(&n, &r, 0.0);
        let mut residuals = Vec::new();
        for k in 0..10_000 {
            let frame = tracker.observe(&n, &r, k as f64 / rates.tracker_hz, None).unwrap();
            for (d, e) in frame.detections.iter().zip(&exact) {
                residuals.extend([
                    d.left_px.u - e.left_px.u,
                    d.left_px.v - e.left_px.v,
                    d.right_px.u - e.right_px.u,
                ]);
            }
        }
        let m = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / m;
        let std = (residuals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        assert!((std - 0.5).abs() < 0.03 * 0.5, "{std}");
    }

    #[test]
    fn detection_streams_are_deterministic() {
        let r = rig();
        let n = needle();
        let noise = NoiseModel {
            pixel_sigma: 0.3,
            dropout_prob: 0.2,
            disparity_bias_sigma: 0.5,
        };
        let run = || {
            let mut t = SyntheticTracker::new(noise, RateConfig::default(), 99).unwrap();
            (0..200)
                .filter_map(|k| t.observe(&n, &r, k as f64 * 0.01, None))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn disparity_bias_moves_depth() {
        let r = rig();
        let n = needle();
        let noise = NoiseModel {
            disparity_bias_sigma: 1.0,
            ..Default::default()
        };
        let mut t = SyntheticTracker::new(noise, RateConfig::default(), 5).unwrap();
        let bias = t.disparity_bias();
        assert!(bias != 0.0);
        let est = reconstruct_markers(&t.observe(&n, &r, 0.0, None).unwrap().detections, &r);
        let p = est.positions[MIDDLE].unwrap();
        let err = p - n.middle();
        // Depth along ws z; expected shift from Z = f·b / d.
        let depth = 115.0 - n.middle().z;
        let shifted = 1000.0 * 4.3 / (1000.0 * 4.3 / depth + bias);
        assert!((err.z - (depth - shifted)).abs() < 0.05, "{err:?}");
        assert!(err.z.abs() > 5.0 * err.x.abs().max(err.y.abs()));
    }

    #[test]
    fn tangent_of_quarter_arc() {
        // Tail at 0°, middle at 45°, tip at 90° on the unit circle.
        let tail = Point3::new(1.0, 0.0, 0.0);
        let mid = Point3::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0);
        let tip = Point3::new(0.0, 1.0, 0.0);
        let g = needle_plane_and_grasp_geometry(&[tip, mid, tail]).unwrap();
        assert!((g.tangent - Vector3::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
        for p in [tip, mid, tail] {
            assert!(g.plane.signed_distance(&p).abs() < 1e-12);
        }
        let swapped = needle_plane_and_grasp_geometry(&[tail, mid, tip]).unwrap();
        assert!((swapped.tangent + g.tangent).norm() < 1e-12);
    }

    #[test]
    fn near_collinear_markers_rejected() {
        let a = |deg: f64| Point3::new(12.0 * deg.to_radians().cos(), 12.0 * deg.to_radians().sin(), 0.0);
        let res = needle_plane_and_grasp_geometry(&[a(0.5), a(0.25), a(0.0)]);
        assert_eq!(res, Err(PerceptionError::Geometry(GeometryError::CollinearPoints)));
    }

    #[test]
    fn segment_distance_cases() {
        let o = Point3::origin();
        let d = segment_distance(
            &o,
            &Point3::new(1.0, 0.0, 0.0),
            &Point3::new(0.5, 1.0, 0.0),
            &Point3::new(0.5, 1.0, 5.0),
        );
        assert!((d - 1.0).abs() < 1e-12);
        let d = segment_distance(
            &o,
            &Point3::new(1.0, 0.0, 0.0),
            &Point3::new(3.0, 0.0, 0.0),
            &Point3::new(4.0, 0.0, 0.0),
        );
        assert!((d - 2.0).abs() < 1e-12);
    }
}

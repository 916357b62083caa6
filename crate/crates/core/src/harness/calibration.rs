//! Simulated calibration: plane scans, tool-tip registration of the remote
//! center, and chessboard extrinsics of the stereo rig.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::ScenarioConfig;
use super::HarnessError;
use crate::camera::{estimate_extrinsics, Pixel, Side, StereoRig};
use crate::geometry::{mean_scan_distance, rot_x, rot_y, Point3, RigidTransform};
use crate::registration::builtin_registrations;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibReport {
    pub seed: u64,
    /// Mean point-to-fitted-plane distance of each scanned plane (mm).
    pub scan_d_mean_mm: [f64; 3],
    pub scan_d_mean_avg_mm: f64,
    /// Mean distance between mapped board corners and measured tool tips.
    pub registration_residual_mm: f64,
    /// Mean distance between board corners mapped by the estimated and the
    /// true `rc_from_ws`.
    pub registration_error_mm: f64,
    pub registration_rotation_error_deg: f64,
    /// Mean distance between triangulated check corners and their true
    /// positions, using the estimated extrinsics.
    pub extrinsic_check_error_mm: f64,
    pub extrinsic_reprojection_rms_px: f64,
    pub rc_from_ws: RigidTransform,
    pub ee_from_ws: RigidTransform,
}

/// `n` indices spread evenly over `0..len`.
fn spread_indices(n: usize, len: usize) -> Vec<usize> {
    if n <= 1 {
        return vec![0; n.min(len)];
    }
    (0..n).map(|i| (i * (len - 1) + (n - 1) / 2) / (n - 1)).collect()
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * sigma)
}

fn noisy_pixel(rng: &mut ChaCha8Rng, px: Pixel, sigma: f64) -> Pixel {
    let du: f64 = rng.sample(StandardNormal);
    let dv: f64 = rng.sample(StandardNormal);
    Pixel::new(px.u + sigma * du, px.v + sigma * dv)
}

/// Runs the three calibration procedures against the true scene.
pub fn simulate_calibration(config: &ScenarioConfig, seed: u64) -> Result<CalibReport, HarnessError> {
    let c = &config.calibration;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // (a) Tool-tip scans of a horizontal and two tilted planes.
    let half = c.scan_patch_mm / 2.0;
    let planes = [
        (nalgebra::Matrix3::identity(), Vector3::zeros()),
        (rot_x(30f64.to_radians()), Vector3::new(0.0, 0.0, 10.0)),
        (rot_y(-30f64.to_radians()), Vector3::new(0.0, 0.0, 10.0)),
    ];
    let mut scan_d_mean_mm = [0.0; 3];
    for (k, (rot, origin)) in planes.iter().enumerate() {
        let points: Vec<Point3> = (0..c.scan_points_per_plane)
            .map(|_| {
                let u = rng.random_range(-half..=half);
                let v = rng.random_range(-half..=half);
                let on_plane = origin + rot * Vector3::new(u, v, 0.0);
                Point3::from(on_plane + gaussian3(&mut rng, c.scan_tip_sigma_mm))
            })
            .collect();
        scan_d_mean_mm[k] = mean_scan_distance(&points)?;
    }

    // (b) Touch board corners with the tool tip and register /ws to /rc.
    let rc_true = config.chain.rc_from_ws()?;
    let corners = c.board.corners();
    let picked: Vec<Point3> = spread_indices(c.registration_points, corners.len())
        .into_iter()
        .map(|i| corners[i])
        .collect();
    let measured: Vec<Point3> = picked
        .iter()
        .map(|p| rc_true.apply(p) + gaussian3(&mut rng, c.registration_tip_sigma_mm))
        .collect();
    let method = builtin_registrations().get(&c.registration_method)?;
    let rc_est = method.register(&picked, &measured)?;
    let registration_residual_mm = picked
        .iter()
        .zip(&measured)
        .map(|(p, m)| (rc_est.apply(p) - m).norm())
        .sum::<f64>()
        / picked.len() as f64;
    let registration_error_mm = corners
        .iter()
        .map(|p| (rc_est.apply(p) - rc_true.apply(p)).norm())
        .sum::<f64>()
        / corners.len() as f64;

    // (c) Chessboard extrinsics from the left image, checked by stereo
    // triangulation of a subset of corners.
    let rig_true = config.rig.build()?;
    let sigma = c.extrinsic_corner_sigma_px;
    let mut observed = Vec::with_capacity(corners.len());
    for p in &corners {
        let px = rig_true.project(Side::Left, p)?;
        observed.push(noisy_pixel(&mut rng, px, sigma));
    }
    let extrinsics = estimate_extrinsics(&c.board, &observed, rig_true.intrinsics(Side::Left))?;
    let rig_est = rig_true.with_ee_from_ws(extrinsics.ee_from_ws);
    let check = spread_indices(c.check_points, corners.len());
    let mut check_sum = 0.0;
    for &i in &check {
        let p = corners[i];
        let l = noisy_pixel(&mut rng, rig_true.project(Side::Left, &p)?, sigma);
        let r = noisy_pixel(&mut rng, rig_true.project(Side::Right, &p)?, sigma);
        check_sum += (rig_est.triangulate(&l, &r)? - p).norm();
    }

    let scan_d_mean_avg_mm = scan_d_mean_mm.iter().sum::<f64>() / 3.0;
    Ok(CalibReport {
        seed,
        scan_d_mean_mm,
        scan_d_mean_avg_mm,
        registration_residual_mm,
        registration_error_mm,
        registration_rotation_error_deg: rc_est.rotation_angle_to(&rc_true).to_degrees(),
        extrinsic_check_error_mm: check_sum / check.len() as f64,
        extrinsic_reprojection_rms_px: extrinsics.reprojection_rms,
        rc_from_ws: rc_est,
        ee_from_ws: extrinsics.ee_from_ws,
    })
}

/// The stereo rig as the controller believes it to be.
pub fn estimated_rig(truth: &StereoRig, report: &CalibReport) -> StereoRig {
    truth.with_ee_from_ws(report.ee_from_ws)
}

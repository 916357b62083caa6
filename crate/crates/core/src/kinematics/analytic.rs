//! Closed-form inverse kinematics of the first three joints.

use serde::Serialize;

use super::{insertion_direction, JointLimits, KinematicsError};
use crate::geometry::Point3;

/// The shaft joints (θ1, θ2, d3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositionJoints {
    pub theta1: f64,
    pub theta2: f64,
    pub d3: f64,
}

impl PositionJoints {
    pub fn pre_wrist(&self) -> Point3 {
        Point3::from(insertion_direction(self.theta1, self.theta2) * self.d3)
    }
}

/// Both analytic solutions placing the pre-wrist point at `p` (in `/rc`).
///
/// Returns `(A, B)`. Solution B has positive insertion `d3 = ‖p‖`,
/// `θ2 = asin(y/‖p‖)` with `cos θ2 > 0`, and `θ1 = atan2(−x, −z)`.
/// Solution A reaches the same point through the opposite branch:
/// `θ2 + π` and `d3 = −‖p‖`.
pub fn ik_analytic_position(p: &Point3) -> Result<(PositionJoints, PositionJoints), KinematicsError> {
    let norm = p.coords.norm();
    if !norm.is_finite() || norm < 1e-9 {
        return Err(KinematicsError::OutOfWorkspace);
    }
    if p.x * p.x + p.z * p.z < 1e-12 {
        return Err(KinematicsError::SingularDirection);
    }
    let theta1 = (-p.x).atan2(-p.z);
    let theta2 = (p.y / norm).clamp(-1.0, 1.0).asin();
    let b = PositionJoints {
        theta1,
        theta2,
        d3: norm,
    };
    let mut theta2_a = theta2 + std::f64::consts::PI;
    if theta2_a > std::f64::consts::PI {
        theta2_a -= 2.0 * std::f64::consts::PI;
    }
    let a = PositionJoints {
        theta1,
        theta2: theta2_a,
        d3: -norm,
    };
    Ok((a, b))
}

/// Prefers solution B; falls back to A when only A respects the limits.
pub fn select_solution(
    a: &PositionJoints,
    b: &PositionJoints,
    limits: &JointLimits,
) -> Result<PositionJoints, KinematicsError> {
    if limits.contains_position(b) {
        Ok(*b)
    } else if limits.contains_position(a) {
        Ok(*a)
    } else {
        Err(KinematicsError::NoFeasibleSolution)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::JointVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn home_direction() {
        let (_, b) = ik_analytic_position(&Point3::new(0.0, 0.0, -150.0)).unwrap();
        assert_eq!(
            b,
            PositionJoints {
                theta1: 0.0,
                theta2: 0.0,
                d3: 150.0
            }
        );
    }

    #[test]
    fn forward_round_trip() {
        let truth = PositionJoints {
            theta1: 0.3,
            theta2: -0.4,
            d3: 120.0,
        };
        let (a, b) = ik_analytic_position(&truth.pre_wrist()).unwrap();
        assert!((b.theta1 - 0.3).abs() < 1e-9 && (b.theta2 + 0.4).abs() < 1e-9 && (b.d3 - 120.0).abs() < 1e-9);
        assert!((a.pre_wrist() - truth.pre_wrist()).norm() < 1e-9);
        assert!(a.d3 < 0.0);
    }

    #[test]
    fn both_branches_reach_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..1000 {
            let p = Point3::new(
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
                rng.random_range(-200.0..-10.0),
            );
            let (a, b) = ik_analytic_position(&p).unwrap();
            assert!((a.pre_wrist() - p).norm() < 1e-9);
            assert!((b.pre_wrist() - p).norm() < 1e-9);
            assert!(b.theta2.cos() > 0.0);
        }
    }

    #[test]
    fn degenerate_targets() {
        assert_eq!(
            ik_analytic_position(&Point3::new(0.0, 150.0, 0.0)),
            Err(KinematicsError::SingularDirection)
        );
        assert_eq!(
            ik_analytic_position(&Point3::origin()),
            Err(KinematicsError::OutOfWorkspace)
        );
    }

    #[test]
    fn selection_rule() {
        let limits = JointLimits::default();
        let (a, b) = ik_analytic_position(&Point3::new(10.0, -5.0, -140.0)).unwrap();
        assert_eq!(select_solution(&a, &b, &limits).unwrap(), b);

        // Limits admitting only negative insertion and a flipped shaft.
        let wide = JointLimits::new(
            JointVector::new(-3.2, -3.2, -300.0, -3.2, -1.5, -1.5, 0.0),
            JointVector::new(3.2, 3.2, 100.0, 3.2, 1.5, 1.5, 1.0),
        )
        .unwrap();
        assert_eq!(select_solution(&a, &b, &wide).unwrap(), a);

        let far = ik_analytic_position(&Point3::new(0.0, 10.0, -400.0)).unwrap();
        assert_eq!(
            select_solution(&far.0, &far.1, &limits),
            Err(KinematicsError::NoFeasibleSolution)
        );
    }
}

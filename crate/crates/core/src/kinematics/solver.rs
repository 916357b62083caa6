//! Interchangeable pose IK strategies, looked up by name.

use std::sync::Arc;

use super::{
    ik_analytic_position, ik_iterative, select_solution, shaft_rotation, zyx_angles, DlsSettings, IkSolution,
    JointVector, KinematicChain, KinematicsError,
};
use crate::geometry::RigidTransform;
use crate::registry::Registry;

pub const DLS: &str = "dls";
pub const ANALYTIC: &str = "analytic";

pub trait IkSolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Joints placing the tool frame at `target` (in `/rc`). `seed` is the
    /// warm start; its grip is carried through unchanged.
    fn solve(
        &self,
        chain: &KinematicChain,
        target: &RigidTransform,
        seed: &JointVector,
    ) -> Result<IkSolution, KinematicsError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DlsSolver {
    pub settings: DlsSettings,
}

impl IkSolver for DlsSolver {
    fn name(&self) -> &'static str {
        DLS
    }

    fn solve(
        &self,
        chain: &KinematicChain,
        target: &RigidTransform,
        seed: &JointVector,
    ) -> Result<IkSolution, KinematicsError> {
        ik_iterative(chain, target, seed, &self.settings)
    }
}

/// Spherical-wrist decoupling: the wrist center follows from the target
/// pose, the shaft joints from [`ik_analytic_position`], and the wrist
/// angles from a ZYX decomposition of the remaining rotation.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticSolver;

impl IkSolver for AnalyticSolver {
    fn name(&self) -> &'static str {
        ANALYTIC
    }

    fn solve(
        &self,
        chain: &KinematicChain,
        target: &RigidTransform,
        seed: &JointVector,
    ) -> Result<IkSolution, KinematicsError> {
        let rot = target.rotation();
        let wrist_center = nalgebra::Point3::from(target.translation() + rot.column(2) * chain.tool_length());
        let (a, b) = ik_analytic_position(&wrist_center)?;
        let shaft = select_solution(&a, &b, &chain.limits)?;
        let wrist = zyx_angles(&(shaft_rotation(shaft.theta1, shaft.theta2).transpose() * rot));
        let joints = seed.with_position(&shaft).with_wrist(wrist);
        chain.limits.check(&joints)?;
        let fk = chain.forward_unchecked(&joints);
        Ok(IkSolution {
            joints,
            iterations: 0,
            position_error: (fk.tip.coords - target.translation()).norm(),
            orientation_error: fk.pose.rotation_angle_to(target),
        })
    }
}

pub fn builtin_ik_solvers(settings: DlsSettings) -> Registry<dyn IkSolver> {
    let mut reg: Registry<dyn IkSolver> = Registry::new("ik");
    reg.register(DLS, Arc::new(DlsSolver { settings }));
    reg.register(ANALYTIC, Arc::new(AnalyticSolver));
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::tests::random_joints;
    use crate::kinematics::JointLimits;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solvers_reach_forward_poses() {
        let chain = KinematicChain::new(RigidTransform::identity(), 9.0, 10.0, JointLimits::default()).unwrap();
        let home = JointVector::new(0.0, 0.0, 120.0, 0.0, 0.0, 0.0, 0.0);
        let reg = builtin_ik_solvers(DlsSettings::default());
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for _ in 0..100 {
            let mut q = random_joints(&mut rng, &chain.limits);
            q.d3 = q.d3.max(20.0);
            let target = chain.forward(&q).unwrap().pose;
            let analytic = reg.get(ANALYTIC).unwrap().solve(&chain, &target, &home).unwrap();
            assert!(analytic.position_error < 1e-9 && analytic.orientation_error < 1e-9);
            assert!(analytic.joints.arm_distance(&q) < 1e-9);
        }
    }

    #[test]
    fn dls_converges_on_random_reachable_targets() {
        let chain = KinematicChain::new(RigidTransform::identity(), 9.0, 10.0, JointLimits::default()).unwrap();
        let home = JointVector::new(0.0, 0.0, 120.0, 0.0, 0.0, 0.0, 0.0);
        let solver = DlsSolver::default();
        // Task envelope: shaft ±45°, wrist roll ±90°, wrist pitch/yaw ±60°.
        let d = f64::to_radians;
        let envelope = JointLimits::new(
            JointVector::new(d(-45.0), d(-45.0), 20.0, d(-90.0), d(-60.0), d(-60.0), 0.0),
            JointVector::new(d(45.0), d(45.0), 240.0, d(90.0), d(60.0), d(60.0), 1.0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let mut converged = 0;
        for _ in 0..1000 {
            let mut q = random_joints(&mut rng, &envelope);
            q.d3 = q.d3.max(20.0);
            let target = chain.forward(&q).unwrap().pose;
            let r = solver.solve(&chain, &target, &home);
            if r.is_ok() {
                converged += 1;
            }
        }
        assert!(converged >= 990, "{converged}/1000");
    }

    #[test]
    fn registry_lists_both() {
        let reg = builtin_ik_solvers(DlsSettings::default());
        assert_eq!(reg.names(), vec![ANALYTIC.to_string(), DLS.to_string()]);
        assert!(reg.get("jacobian-transpose").is_err());
    }
}

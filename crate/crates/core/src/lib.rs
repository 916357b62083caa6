//! Simulator and numerical library for vision-guided grasping of a surgical
//! needle with a remote-center-of-motion manipulator.
//!
//! The pipeline runs stereo observation of three needle markers, calibration
//! between the camera (`/ee`), workspace (`/ws`) and remote-center (`/rc`)
//! frames, position-based visual servoing, and analytic plus damped
//! least-squares inverse kinematics, all hardware-free and deterministic
//! per seed.
//!
//! Lengths are millimetres, angles radians (degrees only in config files and
//! on the command line).

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod geometry;
pub mod harness;
pub mod kinematics;
pub mod perception;
pub mod registration;
pub mod registry;
pub mod servo;

pub use geometry::{Point3, RigidTransform};

//! Monocular keyframe-based visual odometry.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod imageproc;
pub mod multiview;
pub mod optimizer;
pub mod pipeline;
pub mod poly;
pub mod scalar;
pub mod synthetic;
pub mod trackereval;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Pose = geometry::Pose<f64>;
pub type CameraModel = geometry::CameraModel<f64>;
pub type Landmark = geometry::Landmark<f64>;
pub type Trajectory = evaluation::Trajectory<f64>;

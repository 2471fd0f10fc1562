//! Minimal solvers and robust estimation on unit bearing vectors.

pub mod essential;
pub mod p3p;
pub mod ransac;
pub mod refine;

pub use essential::{decompose_essential, essential_5pt, Correspondence, EssentialMatrix};
pub use p3p::{angular_error, p3p};
pub use ransac::{
    ransac, EssentialEstimator, Estimator, P3pEstimator, PointObservation, RansacOptions, RansacResult,
};
pub use refine::{default_refine_options, refine_pose, PoseRefinement};

//! Levenberg-Marquardt core and windowed robust bundle adjustment.

pub mod ba;
pub mod lm;

pub use ba::{
    cull_outliers, default_ba_options, local_bundle_adjust, BaProblem, BaState, BaStats,
    KernelKind, KeyframeRole, OptimizationWindow, RobustKernel, WindowKeyframe, WindowLandmark,
    WindowObservation,
};
pub use lm::{levenberg_marquardt, minimize, LmOptions, LmProblem, LmReport, Termination};

//! Image pyramids, Shi-Tomasi corners and pyramidal Lucas-Kanade tracking.
//!
//! Pixel coordinates put the center of pixel `(i, j)` at `(i, j)`.

mod image;
pub mod corners;
pub mod lk;
pub mod pyramid;

pub use self::image::GrayImage;
pub use corners::{detect_shi_tomasi, Grid};
pub use lk::{forward_backward_filter, track_pyr_lk, LkParams, TrackStatus, TrackedPoint};
pub use pyramid::{build_pyramid, Pyramid};

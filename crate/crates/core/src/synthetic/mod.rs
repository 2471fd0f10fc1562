//! Deterministic synthetic worlds with ground truth.
//!
//! All randomness flows from a `u64` seed through ChaCha8, so fixtures are identical
//! across platforms and runs.

pub mod scene;
pub mod texture;
pub mod window;

pub use scene::{
    default_camera, dump_scene, generate_scene, load_scene, observe, render_frame, render_sequence,
    scripted_occlusions, Observation, ObservationModel, Occlusion, PlaneTexture, SceneKind, SyntheticScene,
};
pub use texture::{add_gaussian_noise, render_panning, render_textured_pair, FlowField, Texture, Warp};
pub use window::{perturb_window, window_fixture, WindowFixture};

//! Random bundle-adjustment windows with known ground truth.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{CameraModel, Pose};
use crate::optimizer::{KeyframeRole, OptimizationWindow, WindowKeyframe, WindowLandmark, WindowObservation};

/// A window together with the camera that observed it.
#[derive(Debug, Clone)]
pub struct WindowFixture {
    pub cam: CameraModel<f64>,
    /// Ground-truth poses and landmarks; observations carry the requested pixel noise.
    pub window: OptimizationWindow<f64>,
}

/// Keyframes strung along x looking down +z at a landmark box 4 to 9 units away.
///
/// The first `n_fixed` keyframes are fixed, the rest mutable. Landmarks seen by fewer
/// than two keyframes are dropped, so the landmark count may come out slightly lower.
pub fn window_fixture(
    seed: u64,
    n_keyframes: usize,
    n_landmarks: usize,
    n_fixed: usize,
    pixel_sigma: f64,
) -> WindowFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = CameraModel::pinhole(500.0, 500.0, 320.0, 240.0, 640, 480).expect("valid camera");
    let keyframes: Vec<WindowKeyframe<f64>> = (0..n_keyframes)
        .map(|k| {
            let rot = UnitQuaternion::from_scaled_axis(Vector3::new(
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
            ));
            let center = Vector3::new(
                0.3 * k as f64 - 0.15 * n_keyframes as f64,
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
            );
            WindowKeyframe {
                id: k as u64,
                pose: Pose::from_center(rot, center),
                role: if k < n_fixed { KeyframeRole::Fixed } else { KeyframeRole::Mutable },
            }
        })
        .collect();
    let noise = Normal::new(0.0, pixel_sigma.max(0.0)).expect("finite sigma");
    let mut landmarks = Vec::new();
    let mut observations = Vec::new();
    let mut next_id = 0u64;
    for _ in 0..n_landmarks {
        let x = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0), rng.gen_range(4.0..9.0));
        let obs: Vec<WindowObservation<f64>> = keyframes
            .iter()
            .filter_map(|kf| {
                let px = cam.project(&kf.pose, &x).ok().filter(|p| cam.contains(p))?;
                let n = if pixel_sigma > 0.0 {
                    Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng))
                } else {
                    Vector2::zeros()
                };
                Some(WindowObservation::isotropic(kf.id, next_id, px + n, 1.0))
            })
            .collect();
        if obs.len() < 2 {
            continue;
        }
        landmarks.push(WindowLandmark { id: next_id, position: x });
        observations.extend(obs);
        next_id += 1;
    }
    WindowFixture {
        cam,
        window: OptimizationWindow {
            keyframes,
            landmarks,
            observations,
        },
    }
}

/// Adds Gaussian noise to landmark positions and to non-fixed keyframe poses.
pub fn perturb_window(
    window: &OptimizationWindow<f64>,
    seed: u64,
    landmark_sigma: f64,
    rotation_sigma: f64,
    translation_sigma: f64,
) -> OptimizationWindow<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |s: f64| -> Vector3<f64> {
        if s <= 0.0 {
            return Vector3::zeros();
        }
        let n = Normal::new(0.0, s).expect("finite sigma");
        Vector3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng))
    };
    let mut out = window.clone();
    for kf in &mut out.keyframes {
        if kf.role == KeyframeRole::Fixed {
            continue;
        }
        let (w, v) = (gauss(rotation_sigma), gauss(translation_sigma));
        let moved = kf.pose.retract(&w, &v);
        kf.pose = if kf.role == KeyframeRole::ScaleFixed {
            let mut m = moved;
            m.translation *= kf.pose.translation.norm() / m.translation.norm();
            m
        } else {
            moved
        };
    }
    for lm in &mut out.landmarks {
        lm.position += gauss(landmark_sigma);
    }
    out
}

//! Keyframe selection, triangulation of new points and bundle adjustment scheduling.

use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector2, Vector3};

use super::frontend::FrameData;
use super::{median, BaOutput, Keyframe, TrackState, VoConfig, VoState};
use crate::error::Error;
use crate::geometry::{triangulate, CameraModel, Landmark, Pose};
use crate::optimizer::{
    cull_outliers, default_ba_options, local_bundle_adjust, KeyframeRole, OptimizationWindow, RobustKernel,
    WindowKeyframe, WindowLandmark, WindowObservation,
};

/// Observation noise assumed by bundle adjustment, in pixels.
const PIXEL_SIGMA: f64 = 1.0;

/// Below this many pure 2D tracks the parallax median falls back to every track.
const MIN_PARALLAX_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyframeReason {
    /// The two-view bootstrap.
    Initialization,
    /// Rotation-compensated disparity since the last keyframe reached the threshold.
    Parallax,
    /// Too few mapped tracks survive compared to the last keyframe.
    Survival,
}

/// Maps current pixels to where they would appear without the rotation `relative`
/// (last keyframe camera to current camera). Points that end up behind the camera
/// give `None`.
pub fn unrotate_features(
    pixels: &[Vector2<f64>],
    relative: &UnitQuaternion<f64>,
    cam: &CameraModel<f64>,
) -> Vec<Option<Vector2<f64>>> {
    let back = relative.inverse();
    pixels
        .iter()
        .map(|px| {
            let b = back * cam.bearing(px);
            if b.z <= 0.0 {
                return None;
            }
            cam.project_camera(&b).ok()
        })
        .collect()
}

/// Keyframe rule: enough parallax, or too few surviving mapped tracks.
pub fn should_create_keyframe(
    median_parallax: Option<f64>,
    mapped: usize,
    mapped_at_last_keyframe: usize,
    config: &VoConfig,
) -> Option<KeyframeReason> {
    if median_parallax.is_some_and(|p| p >= config.parallax_kf_px) {
        return Some(KeyframeReason::Parallax);
    }
    if (mapped as f64) < config.kf_survival_ratio * mapped_at_last_keyframe as f64 {
        return Some(KeyframeReason::Survival);
    }
    None
}

fn reprojects(cam: &CameraModel<f64>, pose: &Pose<f64>, x: &Vector3<f64>, px: &Vector2<f64>, threshold: f64) -> bool {
    cam.project(pose, x).is_ok_and(|p| (p - px).norm() <= threshold)
}

fn run_ba(window: OptimizationWindow<f64>, cam: CameraModel<f64>, delta: f64, cull: f64) -> BaOutput {
    let kernel = RobustKernel::huber(delta)?;
    let (mut out, stats) = local_bundle_adjust(&window, &cam, kernel, &default_ba_options())?;
    log::debug!(
        "BA {} kf {} lm: rmse {:.3} -> {:.3} px",
        window.keyframes.len(),
        window.landmarks.len(),
        stats.initial_pixel_rmse,
        stats.final_pixel_rmse
    );
    let culled = cull_outliers(&mut out, &cam, cull);
    Ok((out, culled))
}

impl VoState {
    /// Median rotation-compensated disparity since the last keyframe.
    pub(super) fn unrotated_parallax(&self, pose: &Pose<f64>) -> Option<f64> {
        let kf = self.keyframes.last()?;
        let relative = pose.rotation * kf.pose.rotation.inverse();
        let pure = self.tracks.iter().filter(|t| t.state == TrackState::Pure2d).count();
        let tracks: Vec<_> = self
            .tracks
            .iter()
            .filter(|t| pure < MIN_PARALLAX_SAMPLES || t.state == TrackState::Pure2d)
            .collect();
        let pixels: Vec<_> = tracks.iter().map(|t| t.pixel()).collect();
        let disparities = unrotate_features(&pixels, &relative, &self.pinhole)
            .into_iter()
            .zip(&tracks)
            .filter_map(|(u, t)| u.map(|u| (u - t.kf_pixel).norm()))
            .collect();
        median(disparities)
    }

    pub(super) fn keyframe_reason(&self, pose: &Pose<f64>) -> Option<KeyframeReason> {
        let kf = self.keyframes.last()?;
        let mapped = self.tracks.iter().filter(|t| t.state == TrackState::Mapped).count();
        should_create_keyframe(self.unrotated_parallax(pose), mapped, kf.observations.len(), &self.config)
    }

    /// Adds a keyframe at `frame`: records mapped observations, triangulates pure 2D
    /// tracks, refills the feature budget and schedules bundle adjustment.
    pub(super) fn create_keyframe(&mut self, frame: u64, pose: Pose<f64>, data: &FrameData, reason: KeyframeReason) {
        // A running optimization must land before the window moves on.
        self.collect_ba(true);
        let kf_id = self.keyframes.len() as u64;
        let pose = self.pose_of(frame).unwrap_or(pose);
        let mut kf = Keyframe {
            id: kf_id,
            frame,
            pose,
            observations: BTreeMap::new(),
            pure_2d: BTreeMap::new(),
        };
        for t in &self.tracks {
            if let (TrackState::Mapped, Some(lm)) = (t.state, t.landmark_id) {
                kf.observations.insert(lm, t.pixel());
                self.landmarks.get_mut(&lm).expect("mapped").observations.insert(kf_id, t.pixel());
            }
        }
        self.keyframes.push(kf);
        let created = self.triangulate_pending(kf_id);
        if created < self.config.min_new_points {
            self.warnings
                .push(format!("keyframe {kf_id} (frame {frame}) triangulated only {created} new points"));
        }
        self.refill(frame, data, kf_id);
        self.snapshot_keyframe(kf_id);
        self.records.insert(
            frame,
            super::FrameRecord {
                keyframe: kf_id,
                relative: Pose::identity(),
            },
        );
        log::debug!(
            "keyframe {kf_id} at frame {frame} ({reason:?}): {created} new points, {} tracks",
            self.tracks.len()
        );
        self.schedule_ba(false);
    }

    /// Sets every track's keyframe pixel and stores the pure 2D snapshot.
    pub(super) fn snapshot_keyframe(&mut self, kf_id: u64) {
        let kf = &mut self.keyframes[kf_id as usize];
        for t in &mut self.tracks {
            t.kf_pixel = t.pixel();
            if t.state == TrackState::Pure2d {
                kf.pure_2d.insert(t.id, t.pixel());
            }
        }
    }

    /// Triangulates pure 2D tracks between their anchor keyframe and keyframe `kf_id`.
    /// Low-parallax tracks wait for a later keyframe; other failures drop the track.
    fn triangulate_pending(&mut self, kf_id: u64) -> usize {
        let pose = self.keyframes[kf_id as usize].pose;
        let threshold = self.config.cull_threshold_px;
        let mut created = 0;
        let mut dropped = Vec::new();
        for i in 0..self.tracks.len() {
            let t = &self.tracks[i];
            if t.state != TrackState::Pure2d || t.anchor.0 >= kf_id {
                continue;
            }
            let (anchor, anchor_px) = t.anchor;
            let px = t.pixel();
            let anchor_pose = self.keyframes[anchor as usize].pose;
            let x = match triangulate(&anchor_pose, &pose, &self.pinhole, &anchor_px, &px) {
                Ok(x) => x,
                Err(Error::LowParallax { .. }) => continue,
                Err(_) => {
                    dropped.push(t.id);
                    continue;
                }
            };
            if !reprojects(&self.pinhole, &anchor_pose, &x, &anchor_px, threshold)
                || !reprojects(&self.pinhole, &pose, &x, &px, threshold)
            {
                dropped.push(t.id);
                continue;
            }
            let lm_id = self.next_landmark;
            self.next_landmark += 1;
            let mut lm = Landmark::new(lm_id, x);
            lm.observations.insert(anchor, anchor_px);
            lm.observations.insert(kf_id, px);
            for k in anchor + 1..kf_id {
                let kf = &self.keyframes[k as usize];
                if let Some(p) = kf.pure_2d.get(&t.id) {
                    if reprojects(&self.pinhole, &kf.pose, &x, p, threshold) {
                        lm.observations.insert(k, *p);
                    }
                }
            }
            for (&k, p) in &lm.observations {
                self.keyframes[k as usize].observations.insert(lm_id, *p);
            }
            self.landmarks.insert(lm_id, lm);
            let t = &mut self.tracks[i];
            t.state = TrackState::Mapped;
            t.landmark_id = Some(lm_id);
            created += 1;
        }
        self.tracks.retain(|t| !dropped.contains(&t.id));
        created
    }

    /// Snapshot of the local window: the last `ba_window` keyframes, the newest
    /// `ba_mutable` of them free. With a single fixed keyframe the oldest free one keeps
    /// its distance to the origin so the scale stays pinned.
    pub(super) fn build_window(&self) -> Option<OptimizationWindow<f64>> {
        let n = self.keyframes.len();
        if n < 2 {
            return None;
        }
        let start = n.saturating_sub(self.config.ba_window);
        let first_mutable = n.saturating_sub(self.config.ba_mutable).max(1).max(start + 1);
        let mut keyframes: Vec<WindowKeyframe<f64>> = (start..n)
            .map(|i| WindowKeyframe {
                id: i as u64,
                pose: self.keyframes[i].pose,
                role: if i < first_mutable { KeyframeRole::Fixed } else { KeyframeRole::Mutable },
            })
            .collect();
        if first_mutable - start == 1 {
            keyframes[1].role = KeyframeRole::ScaleFixed;
        }
        let in_window = |k: u64| k >= start as u64;
        let is_mutable = |k: u64| k >= first_mutable as u64;
        let mut landmarks = Vec::new();
        let mut observations = Vec::new();
        for l in self.landmarks.values().filter(|l| l.is_active()) {
            let obs: Vec<_> = l.observations.iter().filter(|(k, _)| in_window(**k)).collect();
            if obs.len() < 2 || !obs.iter().any(|(k, _)| is_mutable(**k)) {
                continue;
            }
            landmarks.push(WindowLandmark {
                id: l.id,
                position: l.position,
            });
            for (&k, px) in obs {
                observations.push(WindowObservation::isotropic(k, l.id, *px, PIXEL_SIGMA));
            }
        }
        if landmarks.is_empty() {
            return None;
        }
        Some(OptimizationWindow {
            keyframes,
            landmarks,
            observations,
        })
    }

    /// Runs BA inline, or hands it to a worker thread in asynchronous mode unless `inline`.
    pub(super) fn schedule_ba(&mut self, inline: bool) {
        let Some(window) = self.build_window() else {
            return;
        };
        let (cam, delta, cull) = (self.pinhole, self.config.huber_delta_px, self.config.cull_threshold_px);
        if self.config.ba_async && !inline {
            self.pending = Some(std::thread::spawn(move || run_ba(window, cam, delta, cull)));
        } else {
            let out = run_ba(window, cam, delta, cull);
            self.merge_ba(out);
        }
    }

    /// Merges a finished asynchronous BA; with `block` waits for a running one.
    pub(super) fn collect_ba(&mut self, block: bool) {
        let ready = self.pending.as_ref().is_some_and(|h| block || h.is_finished());
        if !ready {
            return;
        }
        let handle = self.pending.take().expect("checked");
        let out = handle
            .join()
            .unwrap_or_else(|_| Err(Error::EstimationFailure("bundle adjustment thread panicked".into())));
        self.merge_ba(out);
    }

    /// Applies optimized poses and points. Frame poses follow their keyframes, so
    /// frames tracked meanwhile are re-based automatically.
    fn merge_ba(&mut self, out: BaOutput) {
        let (window, culled) = match out {
            Ok(v) => v,
            Err(e) => {
                self.warnings.push(format!("bundle adjustment skipped: {e}"));
                return;
            }
        };
        for kf in window.keyframes.iter().filter(|k| k.role != KeyframeRole::Fixed) {
            self.keyframes[kf.id as usize].pose = kf.pose;
        }
        for wl in &window.landmarks {
            if let Some(l) = self.landmarks.get_mut(&wl.id) {
                if l.is_active() {
                    l.position = wl.position;
                }
            }
        }
        for id in culled {
            self.cull_landmark(id);
        }
        self.stats.ba_runs += 1;
    }
}

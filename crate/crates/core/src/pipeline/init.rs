//! Two-view bootstrap: essential matrix, unit baseline, first map points.

use std::collections::BTreeMap;

use super::frontend::{self, FrameData};
use super::keyframe::KeyframeReason;
use super::{
    median, unrotate_features, FeatureTrack, FrameOutcome, FrameRecord, InitProgress, Keyframe, Mode, PoseEstimate,
    TrackState, VoState,
};
use crate::error::Result;
use crate::geometry::{triangulate, Landmark, Pose};
use crate::multiview::{
    decompose_essential, default_refine_options, ransac, refine_pose, Correspondence, EssentialEstimator,
    P3pEstimator, PointObservation,
};

impl VoState {
    /// Makes `frame` the initialization reference with freshly detected features.
    pub(super) fn start_reference(&mut self, frame: u64, data: FrameData) {
        self.tracks.clear();
        self.buffer.clear();
        self.init_ref = Some(frame);
        self.refill(frame, &data, 0);
        self.prev = Some(data);
    }

    fn restart(&mut self, frame: u64, data: FrameData, median_parallax: f64) -> Result<FrameOutcome> {
        self.stats.init_restarts += 1;
        self.start_reference(frame, data);
        Ok(FrameOutcome::Init(InitProgress {
            frame,
            tracked: self.tracks.len(),
            median_parallax,
            restarted: true,
        }))
    }

    pub(super) fn try_initialize(&mut self, frame: u64, data: FrameData) -> Result<FrameOutcome> {
        let reference = self.init_ref.expect("initializing has a reference");
        let prev = self.prev.take().expect("initializing has a previous frame");
        let probes = self.probes(self.tracks.iter(), None);
        let hits = frontend::follow(&self.cam, &self.lk, self.config.fb_threshold_px, &prev, &data, &probes);
        let mut kept = Vec::new();
        for (mut t, hit) in std::mem::take(&mut self.tracks).into_iter().zip(hits) {
            if let Some(hit) = hit {
                t.advance(frame, hit);
                kept.push(t);
            }
        }
        self.tracks = kept;
        let parallax = median(self.tracks.iter().map(|t| (t.pixel() - t.kf_pixel).norm()).collect()).unwrap_or(0.0);
        if self.tracks.len() < 2 * self.config.min_tracked {
            return self.restart(frame, data, parallax);
        }
        let progress = |s: &Self| {
            Ok(FrameOutcome::Init(InitProgress {
                frame,
                tracked: s.tracks.len(),
                median_parallax: parallax,
                restarted: false,
            }))
        };
        if parallax < self.config.init_parallax_px {
            self.prev = Some(data);
            return progress(self);
        }

        let corr: Vec<Correspondence<f64>> = self
            .tracks
            .iter()
            .map(|t| Correspondence::new(self.pinhole.bearing(&t.kf_pixel), self.pinhole.bearing(&t.pixel())))
            .collect();
        let opts = self.ransac_options(self.config.epipolar_threshold_px, frame, 3);
        let Ok(essential) = ransac(&corr, &EssentialEstimator, &opts) else {
            return self.restart(frame, data, parallax);
        };
        let inlier_corr: Vec<_> = essential.inliers.iter().map(|&i| corr[i]).collect();
        let Ok((pose1, _)) = decompose_essential(&essential.model, &inlier_corr) else {
            return self.restart(frame, data, parallax);
        };

        // Rotation alone produces disparity but no baseline; wait for real translation.
        let inlier_px: Vec<_> = essential.inliers.iter().map(|&i| self.tracks[i].pixel()).collect();
        let unrotated = unrotate_features(&inlier_px, &pose1.rotation, &self.pinhole);
        let compensated = median(
            unrotated
                .iter()
                .zip(&essential.inliers)
                .filter_map(|(u, &i)| u.map(|u| (u - self.tracks[i].kf_pixel).norm()))
                .collect(),
        )
        .unwrap_or(0.0);
        if compensated < 0.5 * self.config.init_parallax_px {
            self.prev = Some(data);
            return progress(self);
        }

        let pose0 = Pose::identity();
        let threshold = self.config.cull_threshold_px;
        let mut points = BTreeMap::new();
        let mut low_parallax = Vec::new();
        for &i in &essential.inliers {
            let t = &self.tracks[i];
            match triangulate(&pose0, &pose1, &self.pinhole, &t.kf_pixel, &t.pixel()) {
                Ok(x) => {
                    let ok = [(&pose0, t.kf_pixel), (&pose1, t.pixel())]
                        .iter()
                        .all(|(p, px)| self.pinhole.project(p, &x).is_ok_and(|q| (q - px).norm() <= threshold));
                    if ok {
                        points.insert(t.id, x);
                    }
                }
                Err(crate::Error::LowParallax { .. }) => low_parallax.push(t.id),
                Err(_) => {}
            }
        }
        if points.len() < self.config.min_tracked {
            return self.restart(frame, data, parallax);
        }

        let mut kf0 = Keyframe {
            id: 0,
            frame: reference,
            pose: pose0,
            observations: BTreeMap::new(),
            pure_2d: BTreeMap::new(),
        };
        let mut kf1 = Keyframe {
            id: 1,
            frame,
            pose: pose1,
            observations: BTreeMap::new(),
            pure_2d: BTreeMap::new(),
        };
        let mut tracks: Vec<FeatureTrack> = Vec::new();
        for mut t in std::mem::take(&mut self.tracks) {
            if let Some(x) = points.get(&t.id) {
                let id = self.next_landmark;
                self.next_landmark += 1;
                let mut lm = Landmark::new(id, *x);
                lm.observations.insert(0, t.kf_pixel);
                lm.observations.insert(1, t.pixel());
                kf0.observations.insert(id, t.kf_pixel);
                kf1.observations.insert(id, t.pixel());
                self.landmarks.insert(id, lm);
                t.state = TrackState::Mapped;
                t.landmark_id = Some(id);
                tracks.push(t);
            } else if low_parallax.contains(&t.id) {
                kf0.pure_2d.insert(t.id, t.kf_pixel);
                tracks.push(t);
            }
        }
        self.tracks = tracks;
        self.keyframes = vec![kf0, kf1];
        for (f, kf) in [(reference, 0), (frame, 1)] {
            self.records.insert(
                f,
                FrameRecord {
                    keyframe: kf,
                    relative: Pose::identity(),
                },
            );
        }
        // The bootstrap optimization always runs inline.
        self.schedule_ba(true);
        self.backfill(reference, frame);
        self.refill(frame, &data, 1);
        self.snapshot_keyframe(1);
        self.mode = Mode::Tracking;
        self.init_ref = None;
        self.prev = Some(data);
        // Both bootstrap frames have poses.
        self.stats.tracked_frames += 2;
        self.stats.tracked_features += self.tracks.len();
        log::info!(
            "initialized at frame {frame} against frame {reference} with {} points",
            self.active_landmarks()
        );
        Ok(FrameOutcome::Pose(PoseEstimate {
            frame,
            timestamp: self.timestamps[frame as usize],
            pose: self.pose_of(frame).expect("recorded"),
            inliers: essential.inliers.len(),
            tracked: self.tracks.len(),
            keyframe: Some(KeyframeReason::Initialization),
        }))
    }

    /// Poses for the frames between the two bootstrap keyframes, from the tracks' pixel
    /// histories against the new map.
    fn backfill(&mut self, reference: u64, frame: u64) {
        for g in reference + 1..frame {
            let data: Vec<PointObservation<f64>> = self
                .tracks
                .iter()
                .filter(|t| t.state == TrackState::Mapped)
                .filter_map(|t| {
                    let px = t.pixel_at(g)?;
                    let lm = &self.landmarks[&t.landmark_id?];
                    lm.is_active().then(|| PointObservation {
                        bearing: self.pinhole.bearing(&px),
                        point: lm.position,
                        pixel: px,
                    })
                })
                .collect();
            let opts = self.ransac_options(self.config.pnp_threshold_px, g, 4);
            let Ok(r) = ransac(&data, &P3pEstimator { refit_camera: None }, &opts) else {
                continue;
            };
            if r.inliers.len() < self.config.min_tracked {
                continue;
            }
            let pts: Vec<_> = r.inliers.iter().map(|&i| data[i].point).collect();
            let px: Vec<_> = r.inliers.iter().map(|&i| data[i].pixel).collect();
            let Ok(refined) = refine_pose(&r.model, &self.pinhole, &pts, &px, &default_refine_options()) else {
                continue;
            };
            if refined.failed {
                continue;
            }
            self.records.insert(
                g,
                FrameRecord {
                    keyframe: 0,
                    relative: refined.pose,
                },
            );
            self.stats.tracked_frames += 1;
        }
    }
}

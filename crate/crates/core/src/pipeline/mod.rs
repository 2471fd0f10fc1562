//! The odometry state machine: initialization, frame-to-frame tracking with retracking,
//! P3P pose estimation, keyframe selection, triangulation and local bundle adjustment.
//!
//! Frames come either as images (tracked with pyramidal LK) or as pre-tracked feature
//! observations keyed by a stable id (injection mode). Both go through the same logic.

pub mod config;
mod frontend;
mod init;
mod keyframe;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;
use std::thread::JoinHandle;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::evaluation::Trajectory;
use crate::geometry::{CameraModel, Landmark, LandmarkStatus, Pose};
use crate::imageproc::{build_pyramid, GrayImage, LkParams};
use crate::multiview::{
    default_refine_options, ransac, refine_pose, Correspondence, EssentialEstimator, P3pEstimator, PointObservation,
    RansacOptions,
};
use crate::optimizer::OptimizationWindow;
use crate::synthetic::Observation;

pub use config::VoConfig;
use frontend::{FrameData, Hit, Probe};
pub use keyframe::{should_create_keyframe, unrotate_features, KeyframeReason};

/// Frames of pixel history kept per track.
const HISTORY: usize = 128;

/// One input frame.
#[derive(Debug, Clone, Copy)]
pub enum FrameInput<'a> {
    Image(&'a GrayImage),
    /// Pre-tracked raw pixels; equal ids across frames denote the same feature.
    Features(&'a [Observation]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Uninitialized,
    Initializing,
    Tracking,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Pure2d,
    Mapped,
    Lost,
}

#[derive(Debug, Clone)]
pub struct FeatureTrack {
    pub id: u64,
    /// Recent `(frame, undistorted pixel)` samples, oldest first.
    pub positions: VecDeque<(u64, Vector2<f64>)>,
    pub state: TrackState,
    pub landmark_id: Option<u64>,
    pub last_seen_frame: u64,
    /// Id of the injected feature this track follows.
    pub source: Option<u64>,
    raw: Vector2<f64>,
    /// Pixel at the most recent keyframe.
    kf_pixel: Vector2<f64>,
    /// Keyframe and pixel a pure 2D track gets triangulated from.
    anchor: (u64, Vector2<f64>),
}

impl FeatureTrack {
    fn new(id: u64, source: Option<u64>, frame: u64, hit: Hit, anchor_kf: u64) -> Self {
        Self {
            id,
            positions: VecDeque::from([(frame, hit.pixel)]),
            state: TrackState::Pure2d,
            landmark_id: None,
            last_seen_frame: frame,
            source,
            raw: hit.raw,
            kf_pixel: hit.pixel,
            anchor: (anchor_kf, hit.pixel),
        }
    }

    /// Latest undistorted pixel.
    pub fn pixel(&self) -> Vector2<f64> {
        self.positions.back().expect("tracks are never empty").1
    }

    pub fn pixel_at(&self, frame: u64) -> Option<Vector2<f64>> {
        self.positions.iter().rev().find(|(f, _)| *f == frame).map(|(_, p)| *p)
    }

    fn advance(&mut self, frame: u64, hit: Hit) {
        self.positions.push_back((frame, hit.pixel));
        if self.positions.len() > HISTORY {
            self.positions.pop_front();
        }
        self.raw = hit.raw;
        self.last_seen_frame = frame;
    }
}

#[derive(Debug, Clone)]
pub struct Keyframe {
    pub id: u64,
    pub frame: u64,
    /// World-to-camera.
    pub pose: Pose<f64>,
    /// Landmark id → undistorted pixel.
    pub observations: BTreeMap<u64, Vector2<f64>>,
    /// Pure 2D tracks at creation: track id → undistorted pixel.
    pub pure_2d: BTreeMap<u64, Vector2<f64>>,
}

/// Tracks lost at one frame, with what is needed to look for them again.
#[derive(Debug, Clone)]
pub struct RetrackEntry {
    /// Last frame the tracks were seen in.
    pub frame: u64,
    pub tracks: Vec<FeatureTrack>,
    data: FrameData,
}

#[derive(Debug, Clone, Default)]
pub struct RetrackBuffer {
    entries: VecDeque<RetrackEntry>,
}

impl RetrackBuffer {
    pub fn entries(&self) -> impl Iterator<Item = &RetrackEntry> {
        self.entries.iter()
    }

    /// Number of buffered tracks.
    pub fn len(&self) -> usize {
        self.entries.iter().map(|e| e.tracks.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&mut self, frame: u64, data: &FrameData, mut track: FeatureTrack) {
        track.state = TrackState::Lost;
        match self.entries.iter_mut().find(|e| e.frame == frame) {
            Some(e) => e.tracks.push(track),
            None => {
                let pos = self.entries.iter().position(|e| e.frame > frame).unwrap_or(self.entries.len());
                self.entries.insert(
                    pos,
                    RetrackEntry {
                        frame,
                        tracks: vec![track],
                        data: data.clone(),
                    },
                );
            }
        }
    }

    /// Drops entries whose tracks have been missing for more than `window` frames.
    fn expire(&mut self, current: u64, window: usize) -> usize {
        let mut dropped = 0;
        self.entries.retain(|e| {
            let keep = !e.tracks.is_empty() && current - e.frame - 1 <= window as u64;
            if !keep {
                dropped += e.tracks.len();
            }
            keep
        });
        dropped
    }

    fn remove_landmark(&mut self, landmark: u64) {
        for e in &mut self.entries {
            e.tracks.retain(|t| t.landmark_id != Some(landmark));
        }
    }

    fn clear(&mut self) {
        self.entries.clear();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub frame: u64,
    pub timestamp: f64,
    /// World-to-camera.
    pub pose: Pose<f64>,
    pub inliers: usize,
    pub tracked: usize,
    pub keyframe: Option<KeyframeReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitProgress {
    pub frame: u64,
    pub tracked: usize,
    pub median_parallax: f64,
    /// The reference frame was reset to this frame.
    pub restarted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameOutcome {
    Pose(PoseEstimate),
    Init(InitProgress),
    Lost,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VoStats {
    pub frames: usize,
    pub tracked_frames: usize,
    pub lost_episodes: usize,
    pub init_restarts: usize,
    /// Sum over tracked frames of active tracks, for averages.
    pub tracked_features: usize,
    pub retracked: usize,
    pub retrack_expired: usize,
    pub ba_runs: usize,
    pub culled_landmarks: usize,
}

impl VoStats {
    pub fn mean_tracked(&self) -> f64 {
        self.tracked_features as f64 / self.tracked_frames.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct FrameRecord {
    keyframe: u64,
    /// Frame pose relative to its keyframe, so BA updates carry over.
    relative: Pose<f64>,
}

type BaOutput = Result<(OptimizationWindow<f64>, Vec<u64>)>;

struct Candidate {
    track: FeatureTrack,
    hit: Hit,
    /// Buffer entry the track was recovered from.
    from_buffer: Option<u64>,
}

pub struct VoState {
    config: VoConfig,
    /// Ingestion model, with distortion.
    cam: CameraModel<f64>,
    /// Model of undistorted pixels used everywhere else.
    pinhole: CameraModel<f64>,
    lk: LkParams,
    mode: Mode,
    next_frame: u64,
    timestamps: Vec<f64>,
    keyframes: Vec<Keyframe>,
    landmarks: BTreeMap<u64, Landmark<f64>>,
    tracks: Vec<FeatureTrack>,
    buffer: RetrackBuffer,
    records: BTreeMap<u64, FrameRecord>,
    prev: Option<FrameData>,
    next_track: u64,
    next_landmark: u64,
    init_ref: Option<u64>,
    pending: Option<JoinHandle<BaOutput>>,
    stats: VoStats,
    warnings: Vec<String>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

impl VoState {
    pub fn new(cam: CameraModel<f64>, config: VoConfig) -> Result<Self> {
        cam.validate()?;
        config.validate()?;
        Ok(Self {
            pinhole: cam.without_distortion(),
            cam,
            lk: LkParams::default(),
            config,
            mode: Mode::Uninitialized,
            next_frame: 0,
            timestamps: Vec::new(),
            keyframes: Vec::new(),
            landmarks: BTreeMap::new(),
            tracks: Vec::new(),
            buffer: RetrackBuffer::default(),
            records: BTreeMap::new(),
            prev: None,
            next_track: 0,
            next_landmark: 0,
            init_ref: None,
            pending: None,
            stats: VoStats::default(),
            warnings: Vec::new(),
        })
    }

    pub fn config(&self) -> &VoConfig {
        &self.config
    }

    pub fn camera(&self) -> &CameraModel<f64> {
        &self.cam
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn landmarks(&self) -> &BTreeMap<u64, Landmark<f64>> {
        &self.landmarks
    }

    pub fn active_landmarks(&self) -> usize {
        self.landmarks.values().filter(|l| l.is_active()).count()
    }

    pub fn tracks(&self) -> &[FeatureTrack] {
        &self.tracks
    }

    pub fn retrack_buffer(&self) -> &RetrackBuffer {
        &self.buffer
    }

    pub fn stats(&self) -> &VoStats {
        &self.stats
    }

    /// Non-fatal problems, e.g. keyframes that produced few new points.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Current estimate of a frame's world-to-camera pose.
    pub fn pose_of(&self, frame: u64) -> Option<Pose<f64>> {
        let r = self.records.get(&frame)?;
        Some(r.relative.compose(&self.keyframes[r.keyframe as usize].pose))
    }

    pub fn current_pose(&self) -> Option<Pose<f64>> {
        let (&frame, _) = self.records.last_key_value()?;
        self.pose_of(frame)
    }

    /// Camera trajectory of every frame with a pose, in frame order.
    pub fn trajectory(&self) -> Trajectory<f64> {
        let mut out = Trajectory::new();
        for &frame in self.records.keys() {
            let pose = self.pose_of(frame).expect("recorded");
            out.push_world_to_camera(self.timestamps[frame as usize], &pose)
                .expect("frame timestamps increase");
        }
        out
    }

    /// Drops everything and starts over with the same camera and configuration.
    pub fn reset(&mut self) {
        self.finish();
        let fresh = Self::new(self.cam, self.config.clone()).expect("validated at construction");
        *self = fresh;
    }

    /// Waits for a running bundle adjustment and merges it.
    pub fn finish(&mut self) {
        self.collect_ba(true);
    }

    /// Checks the map bookkeeping; used by tests.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for t in &self.tracks {
            if t.positions.is_empty() {
                return Err(format!("track {} has no positions", t.id));
            }
            if t.state == TrackState::Mapped {
                let ok = t
                    .landmark_id
                    .and_then(|id| self.landmarks.get(&id))
                    .is_some_and(|l| l.is_active());
                if !ok {
                    return Err(format!("mapped track {} without active landmark", t.id));
                }
            }
        }
        for l in self.landmarks.values().filter(|l| l.is_active()) {
            if l.observations.len() < 2 {
                return Err(format!("landmark {} has {} observations", l.id, l.observations.len()));
            }
        }
        for w in self.keyframes.windows(2) {
            if w[1].frame <= w[0].frame {
                return Err(format!("keyframe frames {} then {}", w[0].frame, w[1].frame));
            }
        }
        if self.mode == Mode::Tracking && self.keyframes.len() < 2 {
            return Err("tracking with fewer than two keyframes".into());
        }
        Ok(())
    }

    fn ingest(&self, input: FrameInput<'_>) -> Result<FrameData> {
        let data = match input {
            FrameInput::Image(img) => {
                if img.width() != self.cam.width || img.height() != self.cam.height {
                    return Err(Error::DimensionMismatch(format!(
                        "image {}x{}, camera {}x{}",
                        img.width(),
                        img.height(),
                        self.cam.width,
                        self.cam.height
                    )));
                }
                FrameData::Image(Arc::new(build_pyramid(img, self.config.pyramid_levels)?))
            }
            FrameInput::Features(obs) => {
                let mut map = BTreeMap::new();
                for o in obs {
                    if !(o.pixel.x.is_finite() && o.pixel.y.is_finite()) {
                        return Err(Error::NonFinite("injected observation"));
                    }
                    map.insert(o.id, o.pixel);
                }
                FrameData::Features(Arc::new(map))
            }
        };
        if let Some(prev) = &self.prev {
            if !prev.same_kind(&data) {
                return Err(Error::Precondition("cannot mix image and feature input".into()));
            }
        }
        Ok(data)
    }

    /// Runs one frame through the state machine.
    pub fn process_frame(&mut self, input: FrameInput<'_>, timestamp: f64) -> Result<FrameOutcome> {
        let data = self.ingest(input)?;
        if !timestamp.is_finite() || self.timestamps.last().is_some_and(|&t| timestamp <= t) {
            return Err(Error::Precondition(format!("timestamp {timestamp} does not increase")));
        }
        let frame = self.next_frame;
        self.next_frame += 1;
        self.timestamps.push(timestamp);
        self.stats.frames += 1;
        self.collect_ba(false);
        match self.mode {
            Mode::Lost => Ok(FrameOutcome::Lost),
            Mode::Uninitialized => {
                self.start_reference(frame, data);
                self.mode = Mode::Initializing;
                Ok(FrameOutcome::Init(InitProgress {
                    frame,
                    tracked: self.tracks.len(),
                    median_parallax: 0.0,
                    restarted: false,
                }))
            }
            Mode::Initializing => self.try_initialize(frame, data),
            Mode::Tracking => self.track(frame, timestamp, data),
        }
    }

    fn ransac_seed(&self, frame: u64, salt: u64) -> u64 {
        self.config.seed ^ frame.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt
    }

    fn ransac_options(&self, threshold_px: f64, frame: u64, salt: u64) -> RansacOptions<f64> {
        RansacOptions {
            threshold: threshold_px / self.pinhole.fx,
            confidence: self.config.ransac_confidence,
            max_iters: 1000,
            seed: self.ransac_seed(frame, salt),
        }
    }

    /// Constant-velocity guess from the last two frame poses.
    fn predict_pose(&self, frame: u64) -> Option<Pose<f64>> {
        let last = self.pose_of(frame.checked_sub(1)?)?;
        match frame.checked_sub(2).and_then(|f| self.pose_of(f)) {
            Some(before) => Some(last.compose(&before.inverse()).compose(&last)),
            None => Some(last),
        }
    }

    /// LK seeds: predicted projections for mapped tracks, shared median shift for the rest.
    fn probes<'a>(&self, tracks: impl Iterator<Item = &'a FeatureTrack>, predicted: Option<&Pose<f64>>) -> Vec<Probe> {
        let mut probes: Vec<Probe> = Vec::new();
        let mut seeded = Vec::new();
        let mut shifts = (Vec::new(), Vec::new());
        for t in tracks {
            let seed = predicted.zip(t.landmark_id.and_then(|id| self.landmarks.get(&id))).and_then(|(pose, l)| {
                let px = self.pinhole.project(pose, &l.position).ok()?;
                let raw = self.cam.distort_pixel(&px);
                self.cam.contains(&raw).then_some(raw)
            });
            if let Some(s) = seed {
                shifts.0.push(s.x - t.raw.x);
                shifts.1.push(s.y - t.raw.y);
            }
            seeded.push(seed.is_some());
            probes.push(Probe {
                source: t.source,
                raw: t.raw,
                seed: seed.unwrap_or(t.raw),
            });
        }
        if let (Some(dx), Some(dy)) = (median(shifts.0), median(shifts.1)) {
            for (p, s) in probes.iter_mut().zip(seeded) {
                if !s {
                    p.seed = p.raw + Vector2::new(dx, dy);
                }
            }
        }
        probes
    }

    /// Looks for buffered tracks in the current frame.
    fn retrack_lost(&mut self, data: &FrameData, predicted: Option<&Pose<f64>>) -> Vec<Candidate> {
        let mut out = Vec::new();
        let mut entries = std::mem::take(&mut self.buffer.entries);
        for entry in &mut entries {
            let probes = self.probes(entry.tracks.iter(), predicted);
            let hits = frontend::follow(&self.cam, &self.lk, self.config.fb_threshold_px, &entry.data, data, &probes);
            let mut kept = Vec::new();
            for (track, hit) in entry.tracks.drain(..).zip(hits) {
                match hit {
                    Some(hit) => out.push(Candidate {
                        track,
                        hit,
                        from_buffer: Some(entry.frame),
                    }),
                    None => kept.push(track),
                }
            }
            entry.tracks = kept;
        }
        self.buffer.entries = entries;
        out
    }

    /// Essential-matrix consistency of each candidate with the last keyframe.
    fn epipolar_gate(&self, frame: u64, candidates: &[Candidate]) -> Vec<bool> {
        let data: Vec<Correspondence<f64>> = candidates
            .iter()
            .map(|c| Correspondence::new(self.pinhole.bearing(&c.track.kf_pixel), self.pinhole.bearing(&c.hit.pixel)))
            .collect();
        let opts = self.ransac_options(self.config.epipolar_threshold_px, frame, 1);
        match ransac(&data, &EssentialEstimator, &opts) {
            Ok(r) => {
                let mut keep = vec![false; data.len()];
                for i in r.inliers {
                    keep[i] = true;
                }
                keep
            }
            // Too few points or no consensus: nothing to judge against.
            Err(_) => vec![true; data.len()],
        }
    }

    fn restore_state(&self, track: &mut FeatureTrack) -> bool {
        match track.landmark_id {
            Some(id) if self.landmarks.get(&id).is_some_and(|l| l.is_active()) => {
                track.state = TrackState::Mapped;
                true
            }
            Some(_) => false,
            None => {
                track.state = TrackState::Pure2d;
                true
            }
        }
    }

    fn track(&mut self, frame: u64, timestamp: f64, data: FrameData) -> Result<FrameOutcome> {
        let predicted = self.predict_pose(frame);
        let prev = self.prev.take().expect("tracking has a previous frame");
        let probes = self.probes(self.tracks.iter(), predicted.as_ref());
        let hits = frontend::follow(&self.cam, &self.lk, self.config.fb_threshold_px, &prev, &data, &probes);

        self.stats.retrack_expired += self.buffer.expire(frame, self.config.retrack_window);
        let recovered = if self.config.retracking {
            self.retrack_lost(&data, predicted.as_ref())
        } else {
            Vec::new()
        };

        let mut lost = Vec::new();
        let mut candidates = Vec::new();
        for (track, hit) in std::mem::take(&mut self.tracks).into_iter().zip(hits) {
            match hit {
                Some(hit) => candidates.push(Candidate {
                    track,
                    hit,
                    from_buffer: None,
                }),
                None => lost.push(track),
            }
        }
        candidates.extend(recovered);

        let keep = self.epipolar_gate(frame, &candidates);
        for (mut c, ok) in candidates.into_iter().zip(keep) {
            if ok && self.restore_state(&mut c.track) {
                if c.from_buffer.is_some() {
                    self.stats.retracked += 1;
                }
                c.track.advance(frame, c.hit);
                self.tracks.push(c.track);
            } else if let Some(entry) = c.from_buffer {
                // Rejected again: back to where it came from, still counting down.
                let data = self.buffer.entries.iter().find(|e| e.frame == entry).map(|e| e.data.clone());
                if let Some(d) = data {
                    self.buffer.push(entry, &d, c.track);
                }
            } else {
                lost.push(c.track);
            }
        }
        if self.config.retracking {
            for t in lost {
                self.buffer.push(frame - 1, &prev, t);
            }
        }
        self.tracks.sort_by_key(|t| t.id);

        let Some((pose, inliers)) = self.estimate_pose(frame) else {
            self.mode = Mode::Lost;
            self.stats.lost_episodes += 1;
            self.buffer.clear();
            log::warn!("tracking lost at frame {frame}");
            return Ok(FrameOutcome::Lost);
        };
        let kf = self.keyframes.last().expect("tracking has keyframes");
        self.records.insert(
            frame,
            FrameRecord {
                keyframe: kf.id,
                relative: pose.compose(&kf.pose.inverse()),
            },
        );
        self.stats.tracked_frames += 1;
        self.stats.tracked_features += self.tracks.len();

        let reason = self.keyframe_reason(&pose);
        if let Some(r) = reason {
            self.create_keyframe(frame, pose, &data, r);
        }
        self.prev = Some(data);
        Ok(FrameOutcome::Pose(PoseEstimate {
            frame,
            timestamp,
            pose: self.pose_of(frame).expect("just recorded"),
            inliers,
            tracked: self.tracks.len(),
            keyframe: reason,
        }))
    }

    /// P3P-RANSAC on mapped tracks followed by refinement on the inliers. Mapped
    /// outliers are dropped.
    fn estimate_pose(&mut self, frame: u64) -> Option<(Pose<f64>, usize)> {
        let mapped: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| self.tracks[i].state == TrackState::Mapped)
            .collect();
        let data: Vec<PointObservation<f64>> = mapped
            .iter()
            .map(|&i| {
                let t = &self.tracks[i];
                let px = t.pixel();
                PointObservation {
                    bearing: self.pinhole.bearing(&px),
                    point: self.landmarks[&t.landmark_id.expect("mapped")].position,
                    pixel: px,
                }
            })
            .collect();
        let opts = self.ransac_options(self.config.pnp_threshold_px, frame, 2);
        let est = P3pEstimator { refit_camera: None };
        let result = ransac(&data, &est, &opts).ok()?;
        if result.inliers.len() < self.config.min_tracked {
            return None;
        }
        let pts: Vec<_> = result.inliers.iter().map(|&i| data[i].point).collect();
        let px: Vec<_> = result.inliers.iter().map(|&i| data[i].pixel).collect();
        let refined = refine_pose(&result.model, &self.pinhole, &pts, &px, &default_refine_options()).ok()?;
        if refined.failed || !refined.pose.is_finite() {
            return None;
        }
        let mut inlier = vec![false; data.len()];
        for &i in &result.inliers {
            inlier[i] = true;
        }
        let outliers: BTreeSet<u64> = mapped
            .iter()
            .zip(&inlier)
            .filter(|(_, ok)| !**ok)
            .map(|(&i, _)| self.tracks[i].id)
            .collect();
        self.tracks.retain(|t| !outliers.contains(&t.id));
        Some((refined.pose, result.inliers.len()))
    }

    /// Ids of injected features already followed by a track, active or buffered.
    fn taken_sources(&self) -> BTreeSet<u64> {
        self.tracks
            .iter()
            .chain(self.buffer.entries().flat_map(|e| e.tracks.iter()))
            .filter_map(|t| t.source)
            .collect()
    }

    /// Detects up to the feature budget in free grid cells; new tracks anchor at `anchor_kf`.
    fn refill(&mut self, frame: u64, data: &FrameData, anchor_kf: u64) -> usize {
        let budget = self
            .config
            .max_features
            .saturating_sub(self.tracks.len() + self.buffer.len());
        let occupied: Vec<Vector2<f64>> = self
            .tracks
            .iter()
            .chain(self.buffer.entries().flat_map(|e| e.tracks.iter()))
            .map(|t| t.raw)
            .collect();
        let found = frontend::detect(
            &self.cam,
            self.config.grid_cells,
            data,
            &occupied,
            &self.taken_sources(),
            budget,
        );
        let n = found.len();
        for (source, hit) in found {
            let id = self.next_track;
            self.next_track += 1;
            self.tracks.push(FeatureTrack::new(id, source, frame, hit, anchor_kf));
        }
        n
    }

    fn cull_landmark(&mut self, id: u64) {
        if let Some(l) = self.landmarks.get_mut(&id) {
            if l.is_active() {
                l.status = LandmarkStatus::Culled;
                self.stats.culled_landmarks += 1;
            }
        }
        self.tracks.retain(|t| t.landmark_id != Some(id));
        self.buffer.remove_landmark(id);
    }
}

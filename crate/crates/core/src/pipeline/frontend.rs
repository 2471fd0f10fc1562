//! Measurement sources: the same tracking and detection steps over images or injected features.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::Vector2;

use crate::geometry::CameraModel;
use crate::imageproc::{detect_shi_tomasi, forward_backward_filter, track_pyr_lk, Grid, LkParams, Pyramid};

const CORNER_QUALITY: f32 = 0.01;

/// One frame's worth of measurements.
#[derive(Debug, Clone)]
pub(crate) enum FrameData {
    Image(Arc<Pyramid>),
    /// Source id → raw pixel.
    Features(Arc<BTreeMap<u64, Vector2<f64>>>),
}

impl FrameData {
    pub(crate) fn same_kind(&self, other: &FrameData) -> bool {
        matches!(
            (self, other),
            (FrameData::Image(_), FrameData::Image(_)) | (FrameData::Features(_), FrameData::Features(_))
        )
    }
}

/// Where a feature was found: raw (distorted) and undistorted pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Hit {
    pub raw: Vector2<f64>,
    pub pixel: Vector2<f64>,
}

/// A point to follow: injected source id (if any) and last raw position.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Probe {
    pub source: Option<u64>,
    pub raw: Vector2<f64>,
    pub seed: Vector2<f64>,
}

pub(crate) fn to_hit(cam: &CameraModel<f64>, raw: Vector2<f64>) -> Option<Hit> {
    if !cam.contains(&raw) {
        return None;
    }
    let pixel = cam.undistort_pixel(&raw).ok()?;
    Some(Hit { raw, pixel })
}

/// Follows each probe from `from` into `to`.
pub(crate) fn follow(
    cam: &CameraModel<f64>,
    lk: &LkParams,
    fb_threshold: f64,
    from: &FrameData,
    to: &FrameData,
    probes: &[Probe],
) -> Vec<Option<Hit>> {
    match (from, to) {
        (FrameData::Image(a), FrameData::Image(b)) => {
            let pts: Vec<Vector2<f32>> = probes.iter().map(|p| p.raw.cast()).collect();
            let seeds: Vec<Vector2<f32>> = probes.iter().map(|p| p.seed.cast()).collect();
            let fwd = track_pyr_lk(a, b, &pts, &seeds, lk);
            forward_backward_filter(a, b, &pts, &fwd, fb_threshold as f32, lk)
                .into_iter()
                .map(|r| if r.is_tracked() { to_hit(cam, r.position.cast()) } else { None })
                .collect()
        }
        (_, FrameData::Features(map)) => probes
            .iter()
            .map(|p| p.source.and_then(|id| map.get(&id)).and_then(|raw| to_hit(cam, *raw)))
            .collect(),
        _ => vec![None; probes.len()],
    }
}

/// New features in cells free of `occupied`, at most `budget`.
pub(crate) fn detect(
    cam: &CameraModel<f64>,
    grid_cells: usize,
    data: &FrameData,
    occupied: &[Vector2<f64>],
    taken: &BTreeSet<u64>,
    budget: usize,
) -> Vec<(Option<u64>, Hit)> {
    if budget == 0 {
        return Vec::new();
    }
    match data {
        FrameData::Image(pyr) => {
            let occ: Vec<Vector2<f32>> = occupied.iter().map(|p| p.cast()).collect();
            detect_shi_tomasi(&pyr.levels()[0], grid_cells, &occ, budget, CORNER_QUALITY)
                .into_iter()
                .filter_map(|c| to_hit(cam, c.cast()))
                .map(|h| (None, h))
                .collect()
        }
        FrameData::Features(map) => {
            // Same bucketing as the corner detector; the smallest free id wins a cell.
            let grid = Grid::new(cam.width, cam.height, grid_cells);
            let mut used = vec![false; grid.cols * grid.rows];
            for p in occupied {
                if let Some(i) = grid.index(&p.cast()) {
                    used[i] = true;
                }
            }
            let mut out = Vec::new();
            for (&id, raw) in map.iter() {
                if taken.contains(&id) {
                    continue;
                }
                let Some(cell) = grid.index(&raw.cast()) else {
                    continue;
                };
                if used[cell] {
                    continue;
                }
                let Some(hit) = to_hit(cam, *raw) else {
                    continue;
                };
                used[cell] = true;
                out.push((Some(id), hit));
                if out.len() == budget {
                    break;
                }
            }
            out
        }
    }
}

//! Feature-survival harness for the KLT tracker.
//!
//! Two protocols: sequential survival along an image sequence, and pairwise tracking into a
//! second image translated by a known amount.

use std::io::Write;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::imageproc::{
    build_pyramid, detect_shi_tomasi, forward_backward_filter, track_pyr_lk, GrayImage, LkParams, Pyramid,
};
use crate::multiview::{ransac, Correspondence, EssentialEstimator, RansacOptions};

pub const DEFAULT_GRID_CELLS: usize = 500;
pub const DEFAULT_FB_THRESHOLD_PX: f64 = 2.0;
/// Translation applied to the second image of each pair.
pub const DEFAULT_PAIR_SHIFT: (i32, i32) = (10, 0);
/// Inlier threshold of the epipolar check, in pixels at the focal length.
pub const EPIPOLAR_THRESHOLD_PX: f64 = 1.0;

const PYRAMID_LEVELS: usize = 4;
const CORNER_QUALITY: f32 = 0.01;

/// Counts for one image: features detected in the first image and those still tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurvivalRow {
    pub image_index: usize,
    pub detected: usize,
    pub tracked: usize,
}

impl SurvivalRow {
    pub fn ratio(&self) -> f64 {
        if self.detected == 0 {
            0.0
        } else {
            self.tracked as f64 / self.detected as f64
        }
    }
}

fn check_sizes<'a>(images: impl IntoIterator<Item = &'a GrayImage>) -> Result<()> {
    let mut size = None;
    for img in images {
        let s = (img.width(), img.height());
        match size {
            None => size = Some(s),
            Some(first) if first != s => {
                return Err(Error::DimensionMismatch(format!(
                    "image is {}x{}, expected {}x{}",
                    s.0, s.1, first.0, first.1
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

fn detect(pyr: &Pyramid, grid_cells: usize) -> Vec<Vector2<f32>> {
    detect_shi_tomasi(&pyr.levels()[0], grid_cells, &[], grid_cells, CORNER_QUALITY)
}

/// Forward-backward filtered positions in `cur`, `None` where the track died.
fn track(prev: &Pyramid, cur: &Pyramid, pts: &[Vector2<f32>], fb_threshold: f64) -> Vec<Option<Vector2<f32>>> {
    let lk = LkParams::default();
    let fwd = track_pyr_lk(prev, cur, pts, pts, &lk);
    forward_backward_filter(prev, cur, pts, &fwd, fb_threshold as f32, &lk)
        .into_iter()
        .map(|r| r.is_tracked().then_some(r.position))
        .collect()
}

/// Indices of `alive` consistent with one essential matrix between the first and current
/// image. Returns `None` when no model can be fitted, in which case nothing is rejected.
fn epipolar_inliers(
    cam: &CameraModel<f64>,
    first: &[Vector2<f32>],
    current: &[Option<Vector2<f32>>],
) -> Option<Vec<bool>> {
    let mut idx = Vec::new();
    let mut corr = Vec::new();
    for (i, (a, b)) in first.iter().zip(current).enumerate() {
        let Some(b) = b else { continue };
        let (Ok(a), Ok(b)) = (cam.undistort_pixel(&a.cast()), cam.undistort_pixel(&b.cast())) else {
            continue;
        };
        idx.push(i);
        corr.push(Correspondence::new(cam.bearing(&a), cam.bearing(&b)));
    }
    let opts = RansacOptions {
        threshold: EPIPOLAR_THRESHOLD_PX / cam.fx,
        ..RansacOptions::default()
    };
    let result = ransac(&corr, &EssentialEstimator, &opts).ok()?;
    let mut keep = vec![false; first.len()];
    for &k in &result.inliers {
        keep[idx[k]] = true;
    }
    Some(keep)
}

/// Detects up to one corner per grid cell in the first image and follows that fixed set
/// image to image. A feature dies when it fails the forward-backward check or, with a
/// camera, when it is an outlier to the essential matrix against the first image.
///
/// Row 0 reports the detected set itself.
pub fn run_survival(
    images: &[GrayImage],
    cam: Option<&CameraModel<f64>>,
    grid_cells: usize,
    fb_threshold: f64,
) -> Result<Vec<SurvivalRow>> {
    if images.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: images.len(),
        });
    }
    check_sizes(images)?;
    if let Some(cam) = cam {
        if (cam.width, cam.height) != (images[0].width(), images[0].height()) {
            return Err(Error::DimensionMismatch(format!(
                "camera is {}x{}, images are {}x{}",
                cam.width,
                cam.height,
                images[0].width(),
                images[0].height()
            )));
        }
    }
    let mut prev = build_pyramid(&images[0], PYRAMID_LEVELS)?;
    let first = detect(&prev, grid_cells);
    let detected = first.len();
    let mut current: Vec<Option<Vector2<f32>>> = first.iter().copied().map(Some).collect();
    let mut rows = vec![SurvivalRow {
        image_index: 0,
        detected,
        tracked: detected,
    }];
    for (k, img) in images.iter().enumerate().skip(1) {
        let cur = build_pyramid(img, PYRAMID_LEVELS)?;
        let alive: Vec<usize> = (0..detected).filter(|&i| current[i].is_some()).collect();
        let pts: Vec<Vector2<f32>> = alive.iter().map(|&i| current[i].unwrap()).collect();
        let moved = track(&prev, &cur, &pts, fb_threshold);
        for (&i, p) in alive.iter().zip(moved) {
            current[i] = p;
        }
        if let Some(cam) = cam {
            if let Some(keep) = epipolar_inliers(cam, &first, &current) {
                for (c, k) in current.iter_mut().zip(keep) {
                    if !k {
                        *c = None;
                    }
                }
            }
        }
        rows.push(SurvivalRow {
            image_index: k,
            detected,
            tracked: current.iter().flatten().count(),
        });
        prev = cur;
    }
    Ok(rows)
}

/// `img` moved by `(dx, dy)` pixels, with the uncovered border replicated.
pub fn translate_image(img: &GrayImage, dx: i32, dy: i32) -> GrayImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let sx = (x as i64 - dx as i64).clamp(0, w - 1);
        let sy = (y as i64 - dy as i64).clamp(0, h - 1);
        img.get(sx as usize, sy as usize)
    })
}

/// Detects in the first image of each pair and tracks into the second after translating it
/// by `shift`. A feature counts as tracked when it passes the forward-backward check and
/// lands within `fb_threshold` of its shifted position.
///
/// Only features whose shifted position keeps a full tracking window inside the image are
/// counted, so the border replication never decides the outcome.
pub fn run_pairwise(
    pairs: &[(GrayImage, GrayImage)],
    shift: (i32, i32),
    grid_cells: usize,
    fb_threshold: f64,
) -> Result<Vec<SurvivalRow>> {
    check_sizes(pairs.iter().flat_map(|(a, b)| [a, b]))?;
    let margin = LkParams::default().window as f32 + 1.0;
    let offset = Vector2::new(shift.0 as f32, shift.1 as f32);
    let mut rows = Vec::with_capacity(pairs.len());
    for (k, (a, b)) in pairs.iter().enumerate() {
        let pa = build_pyramid(a, PYRAMID_LEVELS)?;
        let pb = build_pyramid(&translate_image(b, shift.0, shift.1), PYRAMID_LEVELS)?;
        let (w, h) = (a.width() as f32, a.height() as f32);
        let pts: Vec<Vector2<f32>> = detect(&pa, grid_cells)
            .into_iter()
            .filter(|p| {
                let q = p + offset;
                q.x >= margin && q.y >= margin && q.x <= w - 1.0 - margin && q.y <= h - 1.0 - margin
            })
            .collect();
        let tracked = track(&pa, &pb, &pts, fb_threshold)
            .iter()
            .zip(&pts)
            .filter(|(q, p)| q.is_some_and(|q| ((q - *p - offset).norm() as f64) <= fb_threshold))
            .count();
        rows.push(SurvivalRow {
            image_index: k,
            detected: pts.len(),
            tracked,
        });
    }
    Ok(rows)
}

pub fn write_csv(rows: &[SurvivalRow], mut out: impl Write) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    writeln!(out, "image_index,detected,tracked").map_err(io)?;
    for r in rows {
        writeln!(out, "{},{},{}", r.image_index, r.detected, r.tracked).map_err(io)?;
    }
    Ok(())
}

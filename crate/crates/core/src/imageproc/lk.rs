use nalgebra::Vector2;

use super::image::FloatImage;
use super::pyramid::{Level, Pyramid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tracked,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPoint {
    pub position: Vector2<f32>,
    pub status: TrackStatus,
    /// Forward-backward deviation in pixels; zero until the filter has run.
    pub fb_error: f32,
}

impl TrackedPoint {
    pub fn is_tracked(&self) -> bool {
        self.status == TrackStatus::Tracked
    }

    fn lost(position: Vector2<f32>) -> Self {
        Self {
            position,
            status: TrackStatus::Lost,
            fb_error: f32::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkParams {
    /// Patch half-width; the patch is `(2·window+1)²`.
    pub window: usize,
    pub max_iters: usize,
    /// Per-level convergence threshold on the update norm, in pixels.
    pub epsilon: f32,
    /// Minimum eigenvalue of the gradient matrix per patch pixel, with gradients measured
    /// in units of 32 gray levels per pixel (the usual fixed-point convention).
    pub min_eigen: f32,
    /// Largest mean absolute patch difference (gray levels) for a converged track.
    pub max_residual: f32,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            window: 10,
            max_iters: 30,
            epsilon: 0.01,
            min_eigen: 1e-4,
            max_residual: 12.0,
        }
    }
}

/// Fills `out` with bilinear samples of the `(2r+1)²` patch centered at `c`.
fn sample_patch(img: &FloatImage, c: Vector2<f32>, r: usize, out: &mut [f32]) {
    let x0 = c.x.floor();
    let y0 = c.y.floor();
    let (ax, ay) = (c.x - x0, c.y - y0);
    let (w00, w10, w01, w11) = ((1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay, ax * ay);
    let (ix, iy) = (x0 as isize - r as isize, y0 as isize - r as isize);
    let n = 2 * r + 1;
    let (w, h) = (img.width as isize, img.height as isize);
    let inside = ix >= 0 && iy >= 0 && ix + (n as isize) < w && iy + (n as isize) < h;
    if inside {
        let stride = img.width;
        for py in 0..n {
            let row = (iy as usize + py) * stride + ix as usize;
            let a = &img.data[row..row + n + 1];
            let b = &img.data[row + stride..row + stride + n + 1];
            let dst = &mut out[py * n..py * n + n];
            let taps = a.iter().zip(&a[1..]).zip(b.iter().zip(&b[1..]));
            for (d, ((a0, a1), (b0, b1))) in dst.iter_mut().zip(taps) {
                *d = w00 * a0 + w10 * a1 + w01 * b0 + w11 * b1;
            }
        }
    } else {
        for py in 0..n {
            for px in 0..n {
                let (x, y) = (ix + px as isize, iy + py as isize);
                out[py * n + px] = w00 * img.at_clamped(x, y)
                    + w10 * img.at_clamped(x + 1, y)
                    + w01 * img.at_clamped(x, y + 1)
                    + w11 * img.at_clamped(x + 1, y + 1);
            }
        }
    }
}

fn in_bounds(p: &Vector2<f32>, w: usize, h: usize) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f32 && p.y <= (h - 1) as f32
}

struct Scratch {
    t: Vec<f32>,
    gx: Vec<f32>,
    gy: Vec<f32>,
    j: Vec<f32>,
}

impl Scratch {
    fn new(r: usize) -> Self {
        let n = (2 * r + 1) * (2 * r + 1);
        Self {
            t: vec![0.0; n],
            gx: vec![0.0; n],
            gy: vec![0.0; n],
            j: vec![0.0; n],
        }
    }
}

/// Patch index range `[lo, hi)` along one axis whose samples fall inside `[0, size-1]`.
fn valid_range(c: f32, r: usize, size: usize) -> (usize, usize) {
    let n = 2 * r + 1;
    let lo = ((-c).ceil() + r as f32).max(0.0);
    let hi = ((size - 1) as f32 - c).floor() + r as f32 + 1.0;
    let lo = lo.min(n as f32) as usize;
    let hi = hi.clamp(0.0, n as f32) as usize;
    (lo, hi.max(lo))
}

type Rect = (usize, usize, usize, usize);

fn intersect(a: Rect, b: Rect) -> Rect {
    let x0 = a.0.max(b.0);
    let y0 = a.2.max(b.2);
    (x0, a.1.min(b.1).max(x0), y0, a.3.min(b.3).max(y0))
}

fn rect_area(r: Rect) -> usize {
    (r.1 - r.0) * (r.3 - r.2)
}

fn track_one(
    prev: &Pyramid,
    cur: &Pyramid,
    point: Vector2<f32>,
    seed: Vector2<f32>,
    params: &LkParams,
    s: &mut Scratch,
) -> TrackedPoint {
    let levels = prev.num_levels().min(cur.num_levels());
    let r = params.window;
    let n = 2 * r + 1;
    let full = n * n;
    if !(point.x.is_finite() && point.y.is_finite() && seed.x.is_finite() && seed.y.is_finite()) {
        return TrackedPoint::lost(seed);
    }
    let top_scale = 1.0 / (1u32 << (levels - 1)) as f32;
    let mut guess = (seed - point) * top_scale;
    let mut last_residual = 0.0;
    for l in (0..levels).rev() {
        let scale = 1.0 / (1u32 << l) as f32;
        let lp: &Level = &prev.data[l];
        let lc: &Level = &cur.data[l];
        let (w, h) = (lc.img.width, lc.img.height);
        let pl = point * scale;
        sample_patch(&lp.img, pl, r, &mut s.t);
        sample_patch(&lp.gx, pl, r, &mut s.gx);
        sample_patch(&lp.gy, pl, r, &mut s.gy);
        let (tx0, tx1) = valid_range(pl.x, r, lp.img.width);
        let (ty0, ty1) = valid_range(pl.y, r, lp.img.height);
        let template_rect = (tx0, tx1, ty0, ty1);

        let mut v = Vector2::zeros();
        let mut converged_rect = template_rect;
        let (mut a, mut b, mut c) = (0.0f32, 0.0f32, 0.0f32);
        let mut hessian_rect = None;
        for iter in 0..params.max_iters {
            let q = pl + guess + v;
            let (jx0, jx1) = valid_range(q.x, r, w);
            let (jy0, jy1) = valid_range(q.y, r, h);
            let rect = intersect(template_rect, (jx0, jx1, jy0, jy1));
            let count = rect_area(rect);
            if !in_bounds(&q, w, h) || 2 * count < full {
                // Coarse windows cover much of the image; only full resolution decides.
                if l == 0 {
                    return TrackedPoint::lost(q / scale);
                }
                break;
            }
            sample_patch(&lc.img, q, r, &mut s.j);
            if hessian_rect != Some(rect) {
                (a, b, c) = (0.0, 0.0, 0.0);
                for py in rect.2..rect.3 {
                    let span = py * n + rect.0..py * n + rect.1;
                    for (gx, gy) in s.gx[span.clone()].iter().zip(&s.gy[span]) {
                        a += gx * gx;
                        b += gx * gy;
                        c += gy * gy;
                    }
                }
                hessian_rect = Some(rect);
            }
            let (mut bx, mut by) = (0.0f32, 0.0f32);
            for py in rect.2..rect.3 {
                let span = py * n + rect.0..py * n + rect.1;
                let rows = s.t[span.clone()].iter().zip(&s.j[span.clone()]).zip(s.gx[span.clone()].iter().zip(&s.gy[span]));
                for ((t, j), (gx, gy)) in rows {
                    let e = t - j;
                    bx += e * gx;
                    by += e * gy;
                }
            }
            let det = a * c - b * b;
            if iter == 0 {
                let min_eig = 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt();
                if !(min_eig / 1024.0 / count as f32 >= params.min_eigen) || !(det > 0.0) {
                    if l == 0 {
                        return TrackedPoint::lost(seed);
                    }
                    break;
                }
            }
            let eta = Vector2::new((c * bx - b * by) / det, (a * by - b * bx) / det);
            if !(eta.x.is_finite() && eta.y.is_finite()) {
                return TrackedPoint::lost(q / scale);
            }
            v += eta;
            converged_rect = rect;
            if eta.norm() < params.epsilon {
                break;
            }
        }
        if l > 0 {
            guess = (guess + v) * 2.0;
        } else {
            guess += v;
            let q = pl + guess;
            if !in_bounds(&q, w, h) {
                return TrackedPoint::lost(q);
            }
            sample_patch(&lc.img, q, r, &mut s.j);
            let mut acc = 0.0;
            for py in converged_rect.2..converged_rect.3 {
                for px in converged_rect.0..converged_rect.1 {
                    let i = py * n + px;
                    acc += (s.t[i] - s.j[i]).abs();
                }
            }
            last_residual = acc / rect_area(converged_rect).max(1) as f32;
        }
    }
    let position = point + guess;
    if !(last_residual <= params.max_residual) {
        return TrackedPoint::lost(position);
    }
    TrackedPoint {
        position,
        status: TrackStatus::Tracked,
        fb_error: 0.0,
    }
}

/// Coarse-to-fine Lucas-Kanade from `prev` to `cur`, starting each point at its seed.
pub fn track_pyr_lk(
    prev: &Pyramid,
    cur: &Pyramid,
    points: &[Vector2<f32>],
    seeds: &[Vector2<f32>],
    params: &LkParams,
) -> Vec<TrackedPoint> {
    assert_eq!(points.len(), seeds.len(), "one seed per point");
    let mut scratch = Scratch::new(params.window);
    points
        .iter()
        .zip(seeds)
        .map(|(p, s)| track_one(prev, cur, *p, *s, params, &mut scratch))
        .collect()
}

/// Tracks every forward-tracked point back into `prev` and drops those whose return
/// lands more than `threshold` pixels from where it started.
pub fn forward_backward_filter(
    prev: &Pyramid,
    cur: &Pyramid,
    points: &[Vector2<f32>],
    forward: &[TrackedPoint],
    threshold: f32,
    params: &LkParams,
) -> Vec<TrackedPoint> {
    assert_eq!(points.len(), forward.len(), "one forward result per point");
    let mut scratch = Scratch::new(params.window);
    points
        .iter()
        .zip(forward)
        .map(|(p, f)| {
            if !f.is_tracked() {
                return *f;
            }
            // Unseeded, so the return trip cannot be pulled back to the start.
            let back = track_one(cur, prev, f.position, f.position, params, &mut scratch);
            let fb_error = if back.is_tracked() {
                (back.position - p).norm()
            } else {
                f32::INFINITY
            };
            TrackedPoint {
                position: f.position,
                status: if fb_error > threshold { TrackStatus::Lost } else { TrackStatus::Tracked },
                fb_error,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageproc::{build_pyramid, detect_shi_tomasi, GrayImage};
    use crate::synthetic::{render_textured_pair, Warp};
    use nalgebra::Matrix2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn percentile(mut v: Vec<f32>, q: f32) -> f32 {
        v.sort_by(f32::total_cmp);
        v[((v.len() - 1) as f32 * q).round() as usize]
    }

    /// Flow errors of tracked corners that stay inside the second image.
    fn flow_errors(seed: u64, warp: Warp, corners: usize) -> (Vec<f32>, usize) {
        let (a, b, flow) = render_textured_pair(seed, warp, 640, 480);
        let pa = build_pyramid(&a, 4).unwrap();
        let pb = build_pyramid(&b, 4).unwrap();
        let pts = detect_shi_tomasi(&a, 500, &[], corners, 0.01);
        let pts: Vec<_> = pts
            .into_iter()
            .filter(|p| {
                let q = p.cast::<f64>() + flow.at(&p.cast::<f64>());
                q.x > 12.0 && q.y > 12.0 && q.x < 627.0 && q.y < 467.0
            })
            .collect();
        let tracks = track_pyr_lk(&pa, &pb, &pts, &pts, &LkParams::default());
        let mut errs = Vec::new();
        for (p, t) in pts.iter().zip(&tracks) {
            if t.is_tracked() {
                let truth = p.cast::<f64>() + flow.at(&p.cast::<f64>());
                errs.push((t.position.cast::<f64>() - truth).norm() as f32);
            }
        }
        (errs, pts.len())
    }

    #[test]
    fn zero_motion_tracks_in_place() {
        let (a, _, _) = render_textured_pair(1, Warp::Translation(Vector2::zeros()), 320, 240);
        let p = build_pyramid(&a, 3).unwrap();
        let pts = detect_shi_tomasi(&a, 100, &[], 100, 0.01);
        let fwd = track_pyr_lk(&p, &p, &pts, &pts, &LkParams::default());
        let fb = forward_backward_filter(&p, &p, &pts, &fwd, 2.0, &LkParams::default());
        for ((q, f), b) in pts.iter().zip(&fwd).zip(&fb) {
            assert!(f.is_tracked() && b.is_tracked());
            assert!((f.position - q).norm() < 1e-4);
            assert!(b.fb_error < 1e-4);
        }
    }

    #[test]
    fn ten_pixel_shift_is_recovered() {
        let (errs, n) = flow_errors(2, Warp::Translation(Vector2::new(10.0, 0.0)), 200);
        assert!(errs.len() as f32 >= 0.95 * n as f32);
        assert!(percentile(errs, 0.5) < 0.3);
    }

    #[test]
    fn large_subpixel_shifts_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..4 {
            let mag = 10.0 * (i + 1) as f64;
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let shift = Vector2::new(mag * ang.cos(), mag * ang.sin());
            let (errs, n) = flow_errors(10 + i, Warp::Translation(shift), 250);
            assert!(errs.len() as f32 >= 0.9 * n as f32, "shift {shift:?}: {} of {n}", errs.len());
            let (med, p95) = (percentile(errs.clone(), 0.5), percentile(errs, 0.95));
            assert!(med < 0.3 && p95 < 1.0, "shift {shift:?}: median {med} p95 {p95}");
        }
    }

    #[test]
    fn sheared_pair_is_recovered() {
        let warp = Warp::Affine {
            linear: Matrix2::new(1.0, 0.02, 0.0, 1.0),
            translation: Vector2::new(3.0, -2.0),
        };
        let (errs, _) = flow_errors(4, warp, 200);
        assert!(percentile(errs, 0.5) < 0.3);
    }

    #[test]
    fn textureless_point_is_lost() {
        let img = GrayImage::filled(200, 150, 90);
        let p = build_pyramid(&img, 3).unwrap();
        let pts = [Vector2::new(100.0f32, 75.0)];
        let t = track_pyr_lk(&p, &p, &pts, &pts, &LkParams::default());
        assert_eq!(t[0].status, TrackStatus::Lost);
    }

    #[test]
    fn occluded_patch_is_rejected_by_fb_filter() {
        let (a, b, flow) = render_textured_pair(5, Warp::Translation(Vector2::new(6.0, 3.0)), 640, 480);
        let pts = detect_shi_tomasi(&a, 300, &[], 300, 0.01);
        // Overwrite a 41×41 block around every fifth corner's destination with noise.
        let mut occluded = b.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut planted = Vec::new();
        for (i, p) in pts.iter().enumerate().filter(|(i, _)| i % 5 == 0) {
            let q = p.cast::<f64>() + flow.at(&p.cast::<f64>());
            let (cx, cy) = (q.x.round() as i64, q.y.round() as i64);
            for y in cy - 20..=cy + 20 {
                for x in cx - 20..=cx + 20 {
                    if x >= 0 && y >= 0 && (x as usize) < 640 && (y as usize) < 480 {
                        occluded.set(x as usize, y as usize, rng.gen());
                    }
                }
            }
            planted.push(i);
        }
        let pa = build_pyramid(&a, 4).unwrap();
        let pb = build_pyramid(&occluded, 4).unwrap();
        let params = LkParams::default();
        let fwd = track_pyr_lk(&pa, &pb, &pts, &pts, &params);
        let fb = forward_backward_filter(&pa, &pb, &pts, &fwd, 2.0, &params);
        for i in planted {
            assert!(!fb[i].is_tracked(), "occluded corner {i} survived: {:?}", fb[i]);
        }
    }

    #[test]
    fn infinite_threshold_keeps_statuses() {
        let (a, b, _) = render_textured_pair(7, Warp::Translation(Vector2::new(25.0, -5.0)), 320, 240);
        let pa = build_pyramid(&a, 4).unwrap();
        let pb = build_pyramid(&b, 4).unwrap();
        let pts = detect_shi_tomasi(&a, 200, &[], 200, 0.01);
        let params = LkParams::default();
        let fwd = track_pyr_lk(&pa, &pb, &pts, &pts, &params);
        let fb = forward_backward_filter(&pa, &pb, &pts, &fwd, f32::INFINITY, &params);
        for (f, b) in fwd.iter().zip(&fb) {
            assert_eq!(f.status, b.status);
        }
    }

    #[test]
    fn forward_backward_error_is_small_on_clean_warps() {
        let (a, b, _) = render_textured_pair(8, Warp::Translation(Vector2::new(12.3, -7.7)), 640, 480);
        let pa = build_pyramid(&a, 4).unwrap();
        let pb = build_pyramid(&b, 4).unwrap();
        let pts = detect_shi_tomasi(&a, 500, &[], 250, 0.01);
        let params = LkParams::default();
        let fwd = track_pyr_lk(&pa, &pb, &pts, &pts, &params);
        let fb = forward_backward_filter(&pa, &pb, &pts, &fwd, 2.0, &params);
        for t in fb.iter().filter(|t| t.is_tracked()) {
            assert!(t.fb_error < 0.1, "{t:?}");
        }
    }

    #[test]
    fn seeds_start_the_search() {
        // 70 px exceeds what 3 levels recover unaided; a good seed makes it easy.
        let shift = Vector2::new(70.0, 0.0);
        let (a, b, _) = render_textured_pair(9, Warp::Translation(shift), 640, 480);
        let pa = build_pyramid(&a, 3).unwrap();
        let pb = build_pyramid(&b, 3).unwrap();
        let pts: Vec<_> = detect_shi_tomasi(&a, 200, &[], 100, 0.01)
            .into_iter()
            .filter(|p| p.x < 550.0)
            .collect();
        let seeds: Vec<_> = pts.iter().map(|p| p + Vector2::new(68.0, 1.0)).collect();
        let t = track_pyr_lk(&pa, &pb, &pts, &seeds, &LkParams::default());
        let good = pts
            .iter()
            .zip(&t)
            .filter(|(p, t)| t.is_tracked() && (t.position - (*p + shift.cast::<f32>())).norm() < 0.5)
            .count();
        assert!(good as f32 >= 0.9 * pts.len() as f32, "{good} of {}", pts.len());
    }
}

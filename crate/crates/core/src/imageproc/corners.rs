use nalgebra::Vector2;

use super::image::{separable, FloatImage, GrayImage};
use super::pyramid::scharr;

/// Half-width of the structure-tensor window.
const BLOCK_RADIUS: usize = 3;
const BLOCK_WEIGHTS: [f32; 7] = [1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0];

/// Minimum eigenvalue of the binomially weighted 7×7 structure tensor, per pixel.
pub fn min_eigenvalue_map(img: &GrayImage) -> Vec<f32> {
    let f = FloatImage::from_gray(img);
    let (gx, gy) = scharr(&f);
    let (w, h) = (img.width(), img.height());
    let mut xx = vec![0.0f32; w * h];
    let mut xy = vec![0.0f32; w * h];
    let mut yy = vec![0.0f32; w * h];
    for i in 0..w * h {
        xx[i] = gx.data[i] * gx.data[i];
        xy[i] = gx.data[i] * gy.data[i];
        yy[i] = gy.data[i] * gy.data[i];
    }
    let (sxx, sxy, syy) = (window_sum(&xx, w, h), window_sum(&xy, w, h), window_sum(&yy, w, h));
    let mut out = vec![0.0f32; w * h];
    for i in 0..w * h {
        let (a, b, c) = (sxx[i], sxy[i], syy[i]);
        let half = 0.5 * (a + c);
        let d = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        out[i] = (half - d).max(0.0);
    }
    out
}

fn window_sum(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    // The weights sum to 64 per axis; scaling by a power of two is exact.
    let mut out = separable(src, w, h, &BLOCK_WEIGHTS);
    for v in &mut out {
        *v *= 1.0 / 4096.0;
    }
    out
}

/// Square grid of roughly `cells` cells over a `width × height` image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub cell: f32,
    pub cols: usize,
    pub rows: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize, cells: usize) -> Self {
        let cell = ((width * height) as f32 / cells.max(1) as f32).sqrt().max(1.0);
        Self {
            cell,
            cols: (width as f32 / cell).ceil().max(1.0) as usize,
            rows: (height as f32 / cell).ceil().max(1.0) as usize,
        }
    }

    /// Pixel bounds `[x0, x1) × [y0, y1)` of a cell.
    pub fn cell_bounds(&self, index: usize) -> (f32, f32, f32, f32) {
        let (r, c) = (index / self.cols, index % self.cols);
        let x0 = c as f32 * self.cell;
        let y0 = r as f32 * self.cell;
        (x0, y0, x0 + self.cell, y0 + self.cell)
    }

    pub fn index(&self, p: &Vector2<f32>) -> Option<usize> {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return None;
        }
        let c = (p.x / self.cell) as usize;
        let r = (p.y / self.cell) as usize;
        (c < self.cols && r < self.rows).then_some(r * self.cols + c)
    }
}

fn parabola_offset(l: f32, c: f32, r: f32) -> f32 {
    let denom = l - 2.0 * c + r;
    if denom.abs() < f32::EPSILON * c.abs().max(1.0) {
        return 0.0;
    }
    (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
}

/// Shi-Tomasi corners, at most one per grid cell and `budget` in total, strongest first.
///
/// Cells containing any `occupied` point are skipped. Corners scoring below
/// `quality` times the image maximum are discarded.
pub fn detect_shi_tomasi(
    img: &GrayImage,
    grid_cells: usize,
    occupied: &[Vector2<f32>],
    budget: usize,
    quality: f32,
) -> Vec<Vector2<f32>> {
    let (w, h) = (img.width(), img.height());
    let margin = BLOCK_RADIUS + 2;
    if budget == 0 || w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }
    let score = min_eigenvalue_map(img);
    let max = score.iter().copied().fold(0.0f32, f32::max);
    if !(max > 0.0) {
        return Vec::new();
    }
    let threshold = (quality * max).max(f32::MIN_POSITIVE);
    let grid = Grid::new(w, h, grid_cells);
    let mut taken = vec![false; grid.cols * grid.rows];
    for p in occupied {
        if let Some(i) = grid.index(p) {
            taken[i] = true;
        }
    }
    let mut best: Vec<Option<(f32, usize, usize, usize)>> = vec![None; grid.cols * grid.rows];
    for y in margin..h - margin {
        for x in margin..w - margin {
            let s = score[y * w + x];
            if s < threshold {
                continue;
            }
            let Some(cell) = grid.index(&Vector2::new(x as f32, y as f32)) else {
                continue;
            };
            if taken[cell] {
                continue;
            }
            if best[cell].is_none_or(|(b, _, _, _)| s > b) {
                best[cell] = Some((s, x, y, cell));
            }
        }
    }
    let mut found: Vec<(f32, usize, usize, usize)> = best.into_iter().flatten().collect();
    found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.3.cmp(&b.3)));
    found.truncate(budget);
    found
        .into_iter()
        .map(|(s, x, y, cell)| {
            let at = |xx: usize, yy: usize| score[yy * w + xx];
            let dx = parabola_offset(at(x - 1, y), s, at(x + 1, y));
            let dy = parabola_offset(at(x, y - 1), s, at(x, y + 1));
            // Keep the refined corner inside the cell it was selected for.
            let (x0, y0, x1, y1) = grid.cell_bounds(cell);
            let inset = 1e-3;
            Vector2::new(
                (x as f32 + dx).clamp(x0, x1 - inset),
                (y as f32 + dy).clamp(y0, y1 - inset),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Checkerboard quadrant corner at `(cx, cy)`, anti-aliased so each edge passes
    /// through pixel centers exactly.
    fn corner_image(w: usize, h: usize, cx: f32, cy: f32) -> GrayImage {
        let cover = |p: usize, c: f32| ((p as f32 + 0.5) - c).clamp(0.0, 1.0) * 2.0 - 1.0;
        GrayImage::from_fn(w, h, |x, y| {
            let sx = cover(x, cx + 0.5) * 0.5 + cover(x, cx - 0.5) * 0.5;
            let sy = cover(y, cy + 0.5) * 0.5 + cover(y, cy - 0.5) * 0.5;
            (128.0 + 100.0 * sx * sy).round() as u8
        })
    }

    #[test]
    fn constant_image_has_no_corners() {
        let img = GrayImage::filled(100, 80, 50);
        assert!(detect_shi_tomasi(&img, 50, &[], 100, 0.01).is_empty());
    }

    #[test]
    fn single_corner_is_localized() {
        let img = corner_image(200, 120, 100.0, 60.0);
        let c = detect_shi_tomasi(&img, 500, &[], 500, 0.3);
        assert_eq!(c.len(), 1, "{c:?}");
        assert!((c[0] - Vector2::new(100.0, 60.0)).norm() < 0.5, "{:?}", c[0]);
    }

    #[test]
    fn fully_occupied_grid_yields_nothing() {
        let img = corner_image(200, 120, 100.0, 60.0);
        let grid = Grid::new(200, 120, 20);
        let mut occupied = Vec::new();
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                occupied.push(Vector2::new((c as f32 + 0.5) * grid.cell, (r as f32 + 0.5) * grid.cell));
            }
        }
        assert!(detect_shi_tomasi(&img, 20, &occupied, 100, 0.01).is_empty());
    }

    #[test]
    fn one_corner_per_cell_and_budget_respected() {
        let img = GrayImage::from_fn(160, 120, |x, y| if ((x / 7) + (y / 7)) % 2 == 0 { 30 } else { 220 });
        let cells = 48;
        let c = detect_shi_tomasi(&img, cells, &[], 1000, 0.01);
        let grid = Grid::new(160, 120, cells);
        let mut seen = std::collections::HashSet::new();
        for p in &c {
            assert!(seen.insert(grid.index(p).unwrap()));
        }
        assert_eq!(detect_shi_tomasi(&img, cells, &[], 5, 0.01).len(), 5);
    }

    #[test]
    fn integer_translation_moves_corners() {
        // One X-junction at each cell center, so small shifts keep every corner in its cell.
        let grid = Grid::new(240, 160, 24);
        let c = grid.cell as i32;
        let render = |dx: i32, dy: i32| {
            GrayImage::from_fn(240, 160, |x, y| {
                let (xs, ys) = (x as i32 - dx, y as i32 - dy);
                let (ox, oy) = (xs.rem_euclid(c) - c / 2, ys.rem_euclid(c) - c / 2);
                if ox.abs() > c / 3 || oy.abs() > c / 3 {
                    128
                } else if (ox >= 0) == (oy >= 0) {
                    40
                } else {
                    220
                }
            })
        };
        let base = detect_shi_tomasi(&render(0, 0), 24, &[], 100, 0.2);
        assert!(!base.is_empty());
        for (dx, dy) in [(3, 0), (0, -2), (4, 5)] {
            let moved = detect_shi_tomasi(&render(dx, dy), 24, &[], 100, 0.2);
            for p in base.iter().filter(|p| p.x > 40.0 && p.x < 200.0 && p.y > 40.0 && p.y < 120.0) {
                let target = p + Vector2::new(dx as f32, dy as f32);
                let d = moved.iter().map(|q| (q - target).norm()).fold(f32::INFINITY, f32::min);
                assert!(d < 0.5, "shift ({dx},{dy}): {p:?} -> {d}");
            }
        }
    }
}

//! Band-limited random textures and warped image pairs with exact flow.

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::imageproc::GrayImage;

/// Smooth random intensity field built from value-noise octaves.
#[derive(Debug, Clone)]
pub struct Texture {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

/// Octave cell sizes (texels) and amplitudes.
const OCTAVES: &[(usize, f32)] = &[(128, 1.0), (64, 0.9), (32, 0.8), (16, 0.8), (8, 0.8), (4, 0.8), (2, 0.6)];

fn smoothstep(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

impl Texture {
    pub fn random(seed: u64, width: usize, height: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0f32; width * height];
        for &(cell, amp) in OCTAVES {
            let gw = width / cell + 2;
            let gh = height / cell + 2;
            let grid: Vec<f32> = (0..gw * gh).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            for y in 0..height {
                let gy = y / cell;
                let ty = smoothstep((y % cell) as f32 / cell as f32);
                for x in 0..width {
                    let gx = x / cell;
                    let tx = smoothstep((x % cell) as f32 / cell as f32);
                    let g = |i: usize, j: usize| grid[j * gw + i];
                    let top = g(gx, gy) * (1.0 - tx) + g(gx + 1, gy) * tx;
                    let bottom = g(gx, gy + 1) * (1.0 - tx) + g(gx + 1, gy + 1) * tx;
                    data[y * width + x] += amp * (top * (1.0 - ty) + bottom * ty);
                }
            }
        }
        let (lo, hi) = data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        let span = (hi - lo).max(f32::EPSILON);
        for v in &mut data {
            *v = 20.0 + 215.0 * (*v - lo) / span;
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Bilinear read with border replication.
    pub fn sample(&self, x: f64, y: f64) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let ax = (x - x0 as f64) as f32;
        let ay = (y - y0 as f64) as f32;
        let p = |i: usize, j: usize| self.data[j * self.width + i];
        (1.0 - ay) * ((1.0 - ax) * p(x0, y0) + ax * p(x0 + 1, y0))
            + ay * ((1.0 - ax) * p(x0, y0 + 1) + ax * p(x0 + 1, y0 + 1))
    }
}

/// Image-plane motion `p ↦ A (p − c) + c + t` about the image center `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Warp {
    Translation(Vector2<f64>),
    Affine { linear: Matrix2<f64>, translation: Vector2<f64> },
}

impl Warp {
    fn parts(&self) -> (Matrix2<f64>, Vector2<f64>) {
        match *self {
            Warp::Translation(t) => (Matrix2::identity(), t),
            Warp::Affine { linear, translation } => (linear, translation),
        }
    }

    /// Where the content at `p` in the first image lands in the second.
    pub fn apply(&self, p: &Vector2<f64>, center: &Vector2<f64>) -> Vector2<f64> {
        let (a, t) = self.parts();
        a * (p - center) + center + t
    }

    fn inverse_apply(&self, q: &Vector2<f64>, center: &Vector2<f64>) -> Vector2<f64> {
        let (a, t) = self.parts();
        let inv = a.try_inverse().expect("warp must be invertible");
        inv * (q - center - t) + center
    }
}

/// Dense flow from the first image of a pair to the second.
#[derive(Debug, Clone)]
pub struct FlowField {
    width: usize,
    height: usize,
    warp: Warp,
}

impl FlowField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Exact flow at any (sub-pixel) location.
    pub fn at(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let c = Vector2::new((self.width - 1) as f64 / 2.0, (self.height - 1) as f64 / 2.0);
        self.warp.apply(p, &c) - p
    }
}

/// Margin of texture around the rendered view, in texels.
const PAIR_MARGIN: usize = 96;

/// Renders a textured image and its warped counterpart, with the exact flow between them.
pub fn render_textured_pair(seed: u64, warp: Warp, width: usize, height: usize) -> (GrayImage, GrayImage, FlowField) {
    let tex = Texture::random(seed, width + 2 * PAIR_MARGIN, height + 2 * PAIR_MARGIN);
    let m = PAIR_MARGIN as f64;
    let c = Vector2::new((width - 1) as f64 / 2.0, (height - 1) as f64 / 2.0);
    let quantize = |v: f32| v.round().clamp(0.0, 255.0) as u8;
    let first = GrayImage::from_fn(width, height, |x, y| quantize(tex.sample(x as f64 + m, y as f64 + m)));
    let second = GrayImage::from_fn(width, height, |x, y| {
        let src = warp.inverse_apply(&Vector2::new(x as f64, y as f64), &c);
        quantize(tex.sample(src.x + m, src.y + m))
    });
    (first, second, FlowField { width, height, warp })
}

/// A camera panning over one texture: frame `k` shows the view shifted by `k · step`.
pub fn render_panning(seed: u64, frames: usize, step: Vector2<f64>, width: usize, height: usize) -> Vec<GrayImage> {
    let span = step * frames.saturating_sub(1) as f64;
    let extra_x = span.x.abs().ceil() as usize;
    let extra_y = span.y.abs().ceil() as usize;
    let tex = Texture::random(seed, width + extra_x + 2 * PAIR_MARGIN, height + extra_y + 2 * PAIR_MARGIN);
    let origin = Vector2::new(
        PAIR_MARGIN as f64 + if step.x < 0.0 { extra_x as f64 } else { 0.0 },
        PAIR_MARGIN as f64 + if step.y < 0.0 { extra_y as f64 } else { 0.0 },
    );
    (0..frames)
        .map(|k| {
            let o = origin + step * k as f64;
            GrayImage::from_fn(width, height, |x, y| {
                tex.sample(x as f64 + o.x, y as f64 + o.y).round().clamp(0.0, 255.0) as u8
            })
        })
        .collect()
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma` gray levels, saturating.
pub fn add_gaussian_noise(img: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("non-negative sigma");
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        (img.get(x, y) as f64 + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8
    })
}

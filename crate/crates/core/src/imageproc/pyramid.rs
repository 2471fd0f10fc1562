use super::image::{separable, FloatImage, GrayImage};
use crate::error::{Error, Result};

/// Smallest width and height allowed for any pyramid level.
pub const MIN_LEVEL_SIZE: usize = 16;

/// One pyramid level in float precision with Scharr gradients.
#[derive(Debug, Clone)]
pub(crate) struct Level {
    pub img: FloatImage,
    pub gx: FloatImage,
    pub gy: FloatImage,
}

/// Coarse-to-fine image pyramid; level 0 is full resolution.
#[derive(Debug, Clone)]
pub struct Pyramid {
    levels: Vec<GrayImage>,
    pub(crate) data: Vec<Level>,
}

impl Pyramid {
    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn width(&self) -> usize {
        self.levels[0].width()
    }

    pub fn height(&self) -> usize {
        self.levels[0].height()
    }
}

fn smooth(src: &FloatImage) -> FloatImage {
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    FloatImage {
        width: src.width,
        height: src.height,
        data: separable(&src.data, src.width, src.height, &K),
    }
}

fn downsample(src: &FloatImage) -> FloatImage {
    let s = smooth(src);
    let (w, h) = (src.width / 2, src.height / 2);
    let mut out = FloatImage::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            out.data[y * w + x] = s.at(2 * x, 2 * y);
        }
    }
    out
}

/// Scharr derivatives normalized to intensity units per pixel.
pub(crate) fn scharr(img: &FloatImage) -> (FloatImage, FloatImage) {
    let (w, h) = (img.width, img.height);
    let mut gx = FloatImage::zeros(w, h);
    let mut gy = FloatImage::zeros(w, h);
    for y in 0..h {
        let row = |yy: usize| &img.data[yy * w..(yy + 1) * w];
        let (a, b, c) = (row(y.saturating_sub(1)), row(y), row((y + 1).min(h - 1)));
        let (ox, oy) = (&mut gx.data[y * w..(y + 1) * w], &mut gy.data[y * w..(y + 1) * w]);
        for x in 0..w {
            let (l, r) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let dx = 3.0 * (a[r] - a[l]) + 10.0 * (b[r] - b[l]) + 3.0 * (c[r] - c[l]);
            let dy = 3.0 * (c[l] - a[l]) + 10.0 * (c[x] - a[x]) + 3.0 * (c[r] - a[r]);
            ox[x] = dx / 32.0;
            oy[x] = dy / 32.0;
        }
    }
    (gx, gy)
}

/// Builds `levels` levels, halving with floor division after 5×5 binomial smoothing.
pub fn build_pyramid(img: &GrayImage, levels: usize) -> Result<Pyramid> {
    let too_small = || Error::ImageTooSmall {
        width: img.width(),
        height: img.height(),
        levels,
    };
    if levels == 0 {
        return Err(Error::InvalidConfig("pyramid needs at least one level".into()));
    }
    let shrink = 1usize << (levels - 1);
    if img.width() / shrink < MIN_LEVEL_SIZE || img.height() / shrink < MIN_LEVEL_SIZE {
        return Err(too_small());
    }
    let mut floats = vec![FloatImage::from_gray(img)];
    for _ in 1..levels {
        let next = downsample(floats.last().expect("non-empty"));
        floats.push(next);
    }
    let mut grays = Vec::with_capacity(levels);
    let mut data = Vec::with_capacity(levels);
    for (k, f) in floats.into_iter().enumerate() {
        grays.push(if k == 0 { img.clone() } else { f.to_gray() });
        let (gx, gy) = scharr(&f);
        data.push(Level { img: f, gx, gy });
    }
    Ok(Pyramid { levels: grays, data })
}

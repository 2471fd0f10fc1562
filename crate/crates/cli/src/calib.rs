//! Calibration files: one `pinhole_radtan fx fy cx cy k1 k2 p1 p2 width height` line.

use std::path::Path;

use anyhow::{bail, Context, Result};
use kltvo::CameraModel;

pub const MODEL: &str = "pinhole_radtan";

pub fn parse(text: &str) -> Result<CameraModel> {
    let mut found = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if found.is_some() {
            bail!("line {}: more than one camera line", i + 1);
        }
        found = Some((i + 1, line));
    }
    let Some((n, line)) = found else {
        bail!("no camera line");
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields[0] != MODEL {
        bail!("line {n}: unsupported camera model {:?}, expected {MODEL}", fields[0]);
    }
    if fields.len() != 11 {
        bail!("line {n}: expected 10 values after {MODEL}, found {}", fields.len() - 1);
    }
    let num = |k: usize| -> Result<f64> {
        fields[k]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .with_context(|| format!("line {n}: bad number {:?}", fields[k]))
    };
    let size = |k: usize| -> Result<usize> {
        fields[k]
            .parse::<usize>()
            .with_context(|| format!("line {n}: bad image size {:?}", fields[k]))
    };
    let cam = CameraModel::new(
        num(1)?,
        num(2)?,
        num(3)?,
        num(4)?,
        [num(5)?, num(6)?, num(7)?, num(8)?],
        size(9)?,
        size(10)?,
    )?;
    Ok(cam)
}

pub fn load(path: &Path) -> Result<CameraModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("calibration {}", path.display()))
}

pub fn format(cam: &CameraModel) -> String {
    let [k1, k2, p1, p2] = cam.dist;
    format!(
        "# {MODEL} fx fy cx cy k1 k2 p1 p2 width height\n{MODEL} {} {} {} {} {k1} {k2} {p1} {p2} {} {}\n",
        cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height
    )
}

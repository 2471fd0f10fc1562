//! Image directories with optional `times.txt`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

const EXTENSIONS: &[&str] = &["png", "pgm", "pnm", "ppm"];

/// Image files of `dir` in lexicographic order.
pub fn image_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let known = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if known && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        bail!("no images in {}", dir.display());
    }
    Ok(paths)
}

/// Timestamps from `dir/times.txt`, or `i / rate` when the file is absent.
pub fn timestamps(dir: &Path, frames: usize, rate: f64) -> Result<Vec<f64>> {
    let path = dir.join("times.txt");
    if !path.exists() {
        if !(rate > 0.0 && rate.is_finite()) {
            bail!("frame rate must be positive");
        }
        return Ok((0..frames).map(|i| i as f64 / rate).collect());
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let times = parse_times(&text).with_context(|| format!("in {}", path.display()))?;
    if times.len() != frames {
        bail!("{} has {} timestamps for {frames} images", path.display(), times.len());
    }
    Ok(times)
}

pub fn parse_times(text: &str) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let t: f64 = line.parse().ok().filter(|t: &f64| t.is_finite()).with_context(|| format!("line {}: bad timestamp", i + 1))?;
        if out.last().is_some_and(|&p| t <= p) {
            bail!("line {}: timestamps must increase", i + 1);
        }
        out.push(t);
    }
    Ok(out)
}

pub fn format_times(times: &[f64]) -> String {
    times.iter().map(|t| format!("{t}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn times_parse_and_validate() {
        assert_eq!(parse_times("# t\n0\n0.0625\n\n0.125\n").unwrap(), vec![0.0, 0.0625, 0.125]);
        assert!(parse_times("0\n0\n").is_err());
        assert!(parse_times("0\nabc\n").is_err());
        let t = [0.0, 0.0625, 1.5];
        assert_eq!(parse_times(&format_times(&t)).unwrap(), t);
    }

    #[test]
    fn images_sorted_and_rate_fallback() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.png", "a.png", "notes.txt", "c.pgm"] {
            std::fs::write(dir.path().join(name), b"").unwrap();
        }
        let names: Vec<_> = image_paths(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["a.png", "b.png", "c.pgm"]);
        assert_eq!(timestamps(dir.path(), 3, 16.0).unwrap(), vec![0.0, 0.0625, 0.125]);
        std::fs::write(dir.path().join("times.txt"), "1\n2\n").unwrap();
        assert!(timestamps(dir.path(), 3, 16.0).is_err());
    }
}

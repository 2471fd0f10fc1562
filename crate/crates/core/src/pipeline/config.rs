//! Tunable parameters of the odometry pipeline.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VoConfig {
    /// Feature budget per frame.
    pub max_features: usize,
    /// Detection grid is `grid_cells × grid_cells`-ish; see [`crate::imageproc::Grid`].
    pub grid_cells: usize,
    pub fb_threshold_px: f64,
    /// Median rotation-compensated disparity that triggers a keyframe.
    pub parallax_kf_px: f64,
    /// A keyframe is also created when mapped tracks drop below this fraction of the last one's.
    pub kf_survival_ratio: f64,
    /// Frames a lost track stays eligible for retracking.
    pub retrack_window: usize,
    pub retracking: bool,
    pub ba_window: usize,
    /// Most recent keyframes optimized by BA; older window keyframes are fixed.
    pub ba_mutable: usize,
    pub huber_delta_px: f64,
    pub cull_threshold_px: f64,
    pub ransac_confidence: f64,
    /// Epipolar gate threshold against the last keyframe.
    pub epipolar_threshold_px: f64,
    /// P3P-RANSAC inlier threshold.
    pub pnp_threshold_px: f64,
    pub seed: u64,
    pub init_parallax_px: f64,
    /// Fewer P3P inliers than this means tracking is lost.
    pub min_tracked: usize,
    pub min_new_points: usize,
    pub pyramid_levels: usize,
    pub ba_async: bool,
}

impl Default for VoConfig {
    fn default() -> Self {
        Self {
            max_features: 250,
            grid_cells: 250,
            fb_threshold_px: 2.0,
            parallax_kf_px: 30.0,
            kf_survival_ratio: 0.5,
            retrack_window: 5,
            retracking: true,
            ba_window: 5,
            ba_mutable: 3,
            huber_delta_px: 2.0,
            cull_threshold_px: 3.0,
            ransac_confidence: 0.99,
            epipolar_threshold_px: 1.5,
            pnp_threshold_px: 2.0,
            seed: 0,
            init_parallax_px: 30.0,
            min_tracked: 12,
            min_new_points: 10,
            pyramid_levels: 4,
            ba_async: false,
        }
    }
}

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
}

impl VoConfig {
    /// Names accepted by [`VoConfig::set`], in echo order.
    pub const KEYS: &'static [&'static str] = &[
        "max_features",
        "grid_cells",
        "fb_threshold_px",
        "parallax_kf_px",
        "kf_survival_ratio",
        "retrack_window",
        "retracking",
        "ba_window",
        "ba_mutable",
        "huber_delta_px",
        "cull_threshold_px",
        "ransac_confidence",
        "epipolar_threshold_px",
        "pnp_threshold_px",
        "seed",
        "init_parallax_px",
        "min_tracked",
        "min_new_points",
        "pyramid_levels",
        "ba_async",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "max_features" => self.max_features = parse(key, value)?,
            "grid_cells" => self.grid_cells = parse(key, value)?,
            "fb_threshold_px" => self.fb_threshold_px = parse(key, value)?,
            "parallax_kf_px" => self.parallax_kf_px = parse(key, value)?,
            "kf_survival_ratio" => self.kf_survival_ratio = parse(key, value)?,
            "retrack_window" => self.retrack_window = parse(key, value)?,
            "retracking" => self.retracking = parse(key, value)?,
            "ba_window" => self.ba_window = parse(key, value)?,
            "ba_mutable" => self.ba_mutable = parse(key, value)?,
            "huber_delta_px" => self.huber_delta_px = parse(key, value)?,
            "cull_threshold_px" => self.cull_threshold_px = parse(key, value)?,
            "ransac_confidence" => self.ransac_confidence = parse(key, value)?,
            "epipolar_threshold_px" => self.epipolar_threshold_px = parse(key, value)?,
            "pnp_threshold_px" => self.pnp_threshold_px = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "init_parallax_px" => self.init_parallax_px = parse(key, value)?,
            "min_tracked" => self.min_tracked = parse(key, value)?,
            "min_new_points" => self.min_new_points = parse(key, value)?,
            "pyramid_levels" => self.pyramid_levels = parse(key, value)?,
            "ba_async" => self.ba_async = parse(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "max_features" => self.max_features.to_string(),
            "grid_cells" => self.grid_cells.to_string(),
            "fb_threshold_px" => self.fb_threshold_px.to_string(),
            "parallax_kf_px" => self.parallax_kf_px.to_string(),
            "kf_survival_ratio" => self.kf_survival_ratio.to_string(),
            "retrack_window" => self.retrack_window.to_string(),
            "retracking" => self.retracking.to_string(),
            "ba_window" => self.ba_window.to_string(),
            "ba_mutable" => self.ba_mutable.to_string(),
            "huber_delta_px" => self.huber_delta_px.to_string(),
            "cull_threshold_px" => self.cull_threshold_px.to_string(),
            "ransac_confidence" => self.ransac_confidence.to_string(),
            "epipolar_threshold_px" => self.epipolar_threshold_px.to_string(),
            "pnp_threshold_px" => self.pnp_threshold_px.to_string(),
            "seed" => self.seed.to_string(),
            "init_parallax_px" => self.init_parallax_px.to_string(),
            "min_tracked" => self.min_tracked.to_string(),
            "min_new_points" => self.min_new_points.to_string(),
            "pyramid_levels" => self.pyramid_levels.to_string(),
            "ba_async" => self.ba_async.to_string(),
            _ => return None,
        })
    }

    /// Parses flat `key = value` text. Blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected key=value".into(),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.max_features == 0 || self.grid_cells == 0 {
            return bad("max_features and grid_cells must be positive");
        }
        if self.ba_window < 2 || self.ba_mutable == 0 {
            return bad("ba_window must be at least 2 and ba_mutable at least 1");
        }
        if !(0.0..1.0).contains(&self.ransac_confidence) || self.ransac_confidence == 0.0 {
            return bad("ransac_confidence must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.kf_survival_ratio) {
            return bad("kf_survival_ratio must lie in [0, 1]");
        }
        let positive = [
            self.fb_threshold_px,
            self.parallax_kf_px,
            self.huber_delta_px,
            self.cull_threshold_px,
            self.epipolar_threshold_px,
            self.pnp_threshold_px,
            self.init_parallax_px,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad("pixel thresholds must be positive and finite");
        }
        if self.min_tracked < 4 {
            return bad("min_tracked must be at least 4");
        }
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be at least 1");
        }
        Ok(())
    }
}

impl fmt::Display for VoConfig {
    /// One `key=value` line per parameter.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for key in Self::KEYS {
            writeln!(f, "{key}={}", self.get(key).unwrap_or_default())?;
        }
        Ok(())
    }
}

//! Camera trajectories over random landmark fields, observation streams and renders.
//!
//! Cameras look along world +z (x right, y down), so depth is world z for the
//! unrotated camera. The loop kind flies a closed triangle twice over uneven ground,
//! like a downward-looking survey.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::texture::Texture;
use crate::error::{Error, Result};
use crate::evaluation::Trajectory;
use crate::geometry::{CameraModel, Pose};
use crate::imageproc::GrayImage;

/// Frames per second of generated sequences.
pub const FRAME_RATE: f64 = 16.0;
/// Fewest landmarks every generated frame must see.
pub const MIN_VISIBLE: usize = 20;
/// Depth of the planar scene's plane.
pub const PLANE_DEPTH: f64 = 5.0;

const NEAR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    Planar,
    Volumetric,
    Loop,
}

impl SceneKind {
    pub fn name(&self) -> &'static str {
        match self {
            SceneKind::Planar => "planar",
            SceneKind::Volumetric => "volumetric",
            SceneKind::Loop => "loop",
        }
    }
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planar" => Ok(SceneKind::Planar),
            "volumetric" => Ok(SceneKind::Volumetric),
            "loop" => Ok(SceneKind::Loop),
            _ => Err(Error::InvalidConfig(format!("unknown scene kind {s:?}"))),
        }
    }
}

/// A generated world with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub kind: SceneKind,
    pub seed: u64,
    pub cam: CameraModel<f64>,
    /// Landmark `i` is observed as track `i`.
    pub landmarks: Vec<Vector3<f64>>,
    /// World-to-camera poses, one per frame.
    pub poses: Vec<Pose<f64>>,
    pub timestamps: Vec<f64>,
}

/// The camera used by all generated scenes.
pub fn default_camera() -> CameraModel<f64> {
    CameraModel::pinhole(500.0, 500.0, 319.5, 239.5, 640, 480).expect("valid intrinsics")
}

impl SyntheticScene {
    pub fn n_frames(&self) -> usize {
        self.poses.len()
    }

    /// Camera-in-world trajectory with timestamps.
    pub fn ground_truth(&self) -> Trajectory<f64> {
        let mut t = Trajectory::new();
        for (ts, pose) in self.timestamps.iter().zip(&self.poses) {
            t.push_world_to_camera(*ts, pose).expect("generated timestamps increase");
        }
        t
    }

    /// Exact pixel of landmark `id` in `frame`, if it is in front and inside the image.
    pub fn project(&self, frame: usize, id: usize) -> Option<Vector2<f64>> {
        let pc = self.poses[frame].transform_point(&self.landmarks[id]);
        if pc.z < NEAR {
            return None;
        }
        let px = self.cam.project_camera(&pc).ok()?;
        self.cam.contains(&px).then_some(px)
    }

    pub fn visible(&self, frame: usize) -> usize {
        (0..self.landmarks.len()).filter(|&i| self.project(frame, i).is_some()).count()
    }
}

fn camera_center(kind: SceneKind, i: usize, n: usize) -> (Vector3<f64>, UnitQuaternion<f64>) {
    let tau = std::f64::consts::TAU;
    let s = i as f64 / (n - 1) as f64;
    match kind {
        SceneKind::Planar => {
            let c = Vector3::new(0.03 * (i as f64 - 0.5 * (n - 1) as f64), 0.4 * (tau * s).sin(), 0.0);
            let r = Vector3::new(0.03 * (tau * s).sin(), 0.03 * (tau * s).cos(), 0.05 * (2.0 * tau * s).sin());
            (c, UnitQuaternion::from_scaled_axis(r))
        }
        SceneKind::Volumetric => {
            let c = Vector3::new(0.04 * (i as f64 - 0.5 * (n - 1) as f64), 0.3 * (tau * s).sin(), 0.5 * (0.5 * tau * s).sin());
            let r = Vector3::new(0.04 * (tau * s).sin(), 0.06 * (tau * s).cos(), 0.03 * (tau * s).sin());
            (c, UnitQuaternion::from_scaled_axis(r))
        }
        SceneKind::Loop => {
            // Two laps of an equilateral triangle; `u` counts laps so the end lands on the start.
            let u = 2.0 * s;
            let lap = u - u.floor();
            let radius = 4.0;
            let vertex = |k: usize| {
                let a = tau * (0.25 + k as f64 / 3.0);
                Vector3::new(radius * a.cos(), radius * a.sin(), 0.0)
            };
            let side = lap * 3.0;
            let k = (side.floor() as usize).min(2);
            let f = side - k as f64;
            let c = vertex(k) * (1.0 - f) + vertex((k + 1) % 3) * f;
            let r = Vector3::new(0.03 * (tau * u).sin(), 0.03 * (tau * u).cos(), 0.2 * (tau * u).sin());
            (c, UnitQuaternion::from_scaled_axis(r))
        }
    }
}

/// Depth of a new landmark along the viewing ray, expressed as its world z.
fn sample_depth(kind: SceneKind, rng: &mut ChaCha8Rng) -> f64 {
    match kind {
        SceneKind::Planar => PLANE_DEPTH,
        SceneKind::Volumetric => rng.gen_range(2.0..10.0),
        SceneKind::Loop => rng.gen_range(5.0..7.0),
    }
}

/// Builds a deterministic scene. Landmarks are spread over what the trajectory sees.
pub fn generate_scene(kind: SceneKind, n_landmarks: usize, n_frames: usize, seed: u64) -> Result<SyntheticScene> {
    if n_landmarks < 50 {
        return Err(Error::Precondition(format!("need at least 50 landmarks, got {n_landmarks}")));
    }
    if n_frames < 10 {
        return Err(Error::Precondition(format!("need at least 10 frames, got {n_frames}")));
    }
    let cam = default_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut poses = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let (center, rot_cw) = camera_center(kind, i, n_frames);
        poses.push(Pose::from_center(rot_cw.inverse(), center));
    }
    let timestamps = (0..n_frames).map(|i| i as f64 / FRAME_RATE).collect();

    let (w, h) = (cam.width as f64, cam.height as f64);
    let mut landmarks = Vec::with_capacity(n_landmarks);
    while landmarks.len() < n_landmarks {
        let f = rng.gen_range(0..n_frames);
        let px = Vector2::new(rng.gen_range(-0.1 * w..1.1 * w), rng.gen_range(-0.1 * h..1.1 * h));
        let depth = sample_depth(kind, &mut rng);
        let inv = poses[f].inverse();
        let center = inv.translation;
        let ray = inv.rotation * cam.bearing(&px);
        if ray.z <= 1e-3 {
            continue;
        }
        let mut p = center + ray * ((depth - center.z) / ray.z);
        p.z = depth;
        landmarks.push(p);
    }

    let scene = SyntheticScene {
        kind,
        seed,
        cam,
        landmarks,
        poses,
        timestamps,
    };
    for f in 0..n_frames {
        let seen = scene.visible(f);
        if seen < MIN_VISIBLE {
            return Err(Error::Precondition(format!(
                "frame {f} sees {seen} landmarks, fewer than {MIN_VISIBLE}"
            )));
        }
    }
    Ok(scene)
}

/// One feature measurement: landmark/track id and pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub id: u64,
    pub pixel: Vector2<f64>,
}

/// Track `track` disappears in frames `first..=last`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occlusion {
    pub track: u64,
    pub first: usize,
    pub last: usize,
}

/// Corruption applied to exact projections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationModel {
    pub pixel_sigma: f64,
    pub dropout: f64,
    pub occlusions: Vec<Occlusion>,
}

/// Visible landmarks of `frame` with noise, dropout and scripted occlusions applied.
///
/// Randomness depends only on the scene seed and the frame index, so frames can be
/// generated in any order.
pub fn observe(scene: &SyntheticScene, frame: usize, model: &ObservationModel) -> Result<Vec<Observation>> {
    if frame >= scene.n_frames() {
        return Err(Error::Precondition(format!(
            "frame {frame} out of range for {} frames",
            scene.n_frames()
        )));
    }
    if !(model.pixel_sigma >= 0.0) || !(0.0..=1.0).contains(&model.dropout) {
        return Err(Error::InvalidConfig(format!(
            "pixel_sigma {} / dropout {} out of range",
            model.pixel_sigma, model.dropout
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x0b5e_7e5e_ed00_0000);
    rng.set_stream(frame as u64);
    let noise = Normal::new(0.0, model.pixel_sigma).expect("sigma checked");
    let mut out = Vec::new();
    for id in 0..scene.landmarks.len() {
        let Some(exact) = scene.project(frame, id) else {
            continue;
        };
        // Draw both variates for every visible point so the stream does not depend on outcomes.
        let n = Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
        let drop = rng.gen::<f64>() < model.dropout;
        let occluded = model
            .occlusions
            .iter()
            .any(|o| o.track == id as u64 && (o.first..=o.last).contains(&frame));
        let pixel = exact + n;
        if drop || occluded || !scene.cam.contains(&pixel) {
            continue;
        }
        out.push(Observation { id: id as u64, pixel });
    }
    Ok(out)
}

/// `count` random occlusions of 1..=`max_len` frames on tracks `0..n_tracks`, never
/// overlapping on the same track.
pub fn scripted_occlusions(n_tracks: usize, n_frames: usize, count: usize, max_len: usize, seed: u64) -> Vec<Occlusion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Occlusion> = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 100 * count.max(1) && n_tracks > 0 && n_frames > max_len + 2 {
        attempts += 1;
        let track = rng.gen_range(0..n_tracks) as u64;
        let len = rng.gen_range(1..=max_len.max(1));
        let first = rng.gen_range(1..n_frames - len);
        let last = first + len - 1;
        let clash = out
            .iter()
            .any(|o| o.track == track && first <= o.last + 1 && o.first <= last + 1);
        if !clash {
            out.push(Occlusion { track, first, last });
        }
    }
    out
}

/// Texture draped over the plane of a planar scene.
#[derive(Debug, Clone)]
pub struct PlaneTexture {
    texture: Texture,
    origin: Vector2<f64>,
    texels_per_unit: f64,
}

impl PlaneTexture {
    /// Covers everything the scene's cameras see of the plane.
    pub fn for_scene(scene: &SyntheticScene, seed: u64) -> Result<Self> {
        if scene.kind != SceneKind::Planar {
            return Err(Error::Precondition("only planar scenes can be rendered".into()));
        }
        let cam = &scene.cam;
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        let (w, h) = (cam.width as f64, cam.height as f64);
        for pose in &scene.poses {
            for px in [Vector2::new(0.0, 0.0), Vector2::new(w, 0.0), Vector2::new(0.0, h), Vector2::new(w, h)] {
                let p = plane_hit(pose, cam, &px).ok_or(Error::Degenerate("camera does not see the plane"))?;
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
        }
        // One texel per pixel at the nominal depth.
        let texels_per_unit = cam.fx / PLANE_DEPTH;
        let margin = 8.0 / texels_per_unit;
        let origin = lo - Vector2::repeat(margin);
        let size = (hi - lo + Vector2::repeat(2.0 * margin)) * texels_per_unit;
        let texture = Texture::random(seed, size.x.ceil() as usize + 2, size.y.ceil() as usize + 2);
        Ok(PlaneTexture {
            texture,
            origin,
            texels_per_unit,
        })
    }

    /// Intensity of the plane at world `(x, y)`.
    pub fn intensity(&self, p: &Vector2<f64>) -> f32 {
        let t = (p - self.origin) * self.texels_per_unit;
        self.texture.sample(t.x, t.y)
    }
}

fn plane_hit(pose: &Pose<f64>, cam: &CameraModel<f64>, px: &Vector2<f64>) -> Option<Vector2<f64>> {
    let inv = pose.inverse();
    let ray = inv.rotation * cam.bearing(px);
    let c = inv.translation;
    let lambda = (PLANE_DEPTH - c.z) / ray.z;
    (lambda > 0.0 && lambda.is_finite()).then(|| {
        let p = c + ray * lambda;
        Vector2::new(p.x, p.y)
    })
}

/// Renders frame `frame` of a planar scene by ray casting onto the textured plane.
pub fn render_frame(scene: &SyntheticScene, texture: &PlaneTexture, frame: usize) -> GrayImage {
    let cam = &scene.cam;
    let pose = &scene.poses[frame];
    let inv = pose.inverse();
    let r = inv.rotation.to_rotation_matrix().into_inner();
    let c = inv.translation;
    GrayImage::from_fn(cam.width, cam.height, |x, y| {
        let d = r * Vector3::new((x as f64 - cam.cx) / cam.fx, (y as f64 - cam.cy) / cam.fy, 1.0);
        let lambda = (PLANE_DEPTH - c.z) / d.z;
        let p = c + d * lambda;
        texture.intensity(&Vector2::new(p.x, p.y)).round().clamp(0.0, 255.0) as u8
    })
}

/// All frames of a planar scene.
pub fn render_sequence(scene: &SyntheticScene, texture_seed: u64) -> Result<Vec<GrayImage>> {
    let tex = PlaneTexture::for_scene(scene, texture_seed)?;
    Ok((0..scene.n_frames()).map(|f| render_frame(scene, &tex, f)).collect())
}

/// Plain-text scene dump.
///
/// ```text
/// # comments start with '#'
/// kind loop
/// seed 7
/// camera fx fy cx cy k1 k2 p1 p2 width height
/// landmarks N
/// x y z                         (N lines)
/// poses M
/// t qx qy qz qw tx ty tz        (M lines, world-to-camera)
/// observations K
/// frame id u v                  (K lines, optional section)
/// ```
pub fn dump_scene(scene: &SyntheticScene, observations: &[Vec<Observation>]) -> String {
    let mut s = String::from("# kltvo synthetic scene\n");
    let c = &scene.cam;
    let _ = writeln!(s, "kind {}", scene.kind.name());
    let _ = writeln!(s, "seed {}", scene.seed);
    let _ = writeln!(
        s,
        "camera {} {} {} {} {} {} {} {} {} {}",
        c.fx, c.fy, c.cx, c.cy, c.dist[0], c.dist[1], c.dist[2], c.dist[3], c.width, c.height
    );
    let _ = writeln!(s, "landmarks {}", scene.landmarks.len());
    for p in &scene.landmarks {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    let _ = writeln!(s, "poses {}", scene.poses.len());
    for (t, p) in scene.timestamps.iter().zip(&scene.poses) {
        let q = p.rotation.quaternion();
        let v = p.translation;
        let _ = writeln!(s, "{} {} {} {} {} {} {} {}", t, q.i, q.j, q.k, q.w, v.x, v.y, v.z);
    }
    let total: usize = observations.iter().map(Vec::len).sum();
    if total > 0 {
        let _ = writeln!(s, "observations {total}");
        for (f, obs) in observations.iter().enumerate() {
            for o in obs {
                let _ = writeln!(s, "{} {} {} {}", f, o.id, o.pixel.x, o.pixel.y);
            }
        }
    }
    s
}

/// Inverse of [`dump_scene`]; observations are grouped per frame.
pub fn load_scene(text: &str) -> Result<(SyntheticScene, Vec<Vec<Observation>>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
        let (n, l) = lines.next().ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })?;
        Ok((n, l.split_whitespace().collect()))
    };
    fn num<T: FromStr>(line: usize, s: &str) -> Result<T> {
        s.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad number {s:?}"),
        })
    }
    fn header<'a>(line: usize, f: &[&'a str], key: &str, arity: usize) -> Result<()> {
        if f.first() != Some(&key) || f.len() != arity + 1 {
            return Err(Error::Parse {
                line,
                msg: format!("expected `{key}` with {arity} values"),
            });
        }
        Ok(())
    }
    fn floats(line: usize, f: &[&str], n: usize) -> Result<Vec<f64>> {
        if f.len() != n {
            return Err(Error::Parse {
                line,
                msg: format!("expected {n} values, found {}", f.len()),
            });
        }
        f.iter().map(|v| num::<f64>(line, v)).collect()
    }

    let (ln, f) = next("kind")?;
    header(ln, &f, "kind", 1)?;
    let kind: SceneKind = f[1].parse().map_err(|e: Error| Error::Parse { line: ln, msg: e.to_string() })?;
    let (ln, f) = next("seed")?;
    header(ln, &f, "seed", 1)?;
    let seed = num::<u64>(ln, f[1])?;
    let (ln, f) = next("camera")?;
    header(ln, &f, "camera", 10)?;
    let v = floats(ln, &f[1..9], 8)?;
    let cam = CameraModel::new(
        v[0],
        v[1],
        v[2],
        v[3],
        [v[4], v[5], v[6], v[7]],
        num(ln, f[9])?,
        num(ln, f[10])?,
    )?;
    let (ln, f) = next("landmarks")?;
    header(ln, &f, "landmarks", 1)?;
    let n: usize = num(ln, f[1])?;
    let mut landmarks = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, f) = next("landmark")?;
        let v = floats(ln, &f, 3)?;
        landmarks.push(Vector3::new(v[0], v[1], v[2]));
    }
    let (ln, f) = next("poses")?;
    header(ln, &f, "poses", 1)?;
    let m: usize = num(ln, f[1])?;
    let mut poses = Vec::with_capacity(m);
    let mut timestamps = Vec::with_capacity(m);
    for _ in 0..m {
        let (ln, f) = next("pose")?;
        let v = floats(ln, &f, 8)?;
        timestamps.push(v[0]);
        let q = nalgebra::Quaternion::new(v[4], v[1], v[2], v[3]);
        poses.push(Pose::new(UnitQuaternion::new_unchecked(q), Vector3::new(v[5], v[6], v[7])));
    }
    let mut observations = vec![Vec::new(); m];
    if let Ok((ln, f)) = next("observations") {
        header(ln, &f, "observations", 1)?;
        let k: usize = num(ln, f[1])?;
        for _ in 0..k {
            let (ln, f) = next("observation")?;
            if f.len() != 4 {
                return Err(Error::Parse {
                    line: ln,
                    msg: "expected `frame id u v`".into(),
                });
            }
            let frame: usize = num(ln, f[0])?;
            let id: u64 = num(ln, f[1])?;
            let pixel = Vector2::new(num(ln, f[2])?, num(ln, f[3])?);
            observations
                .get_mut(frame)
                .ok_or_else(|| Error::Parse {
                    line: ln,
                    msg: format!("frame {frame} out of range"),
                })?
                .push(Observation { id, pixel });
        }
    }
    let scene = SyntheticScene {
        kind,
        seed,
        cam,
        landmarks,
        poses,
        timestamps,
    };
    Ok((scene, observations))
}

//! Subcommand implementations. Each returns the process exit status on completion.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use kltvo::evaluation::{metrics, Trajectory};
use kltvo::imageproc::GrayImage;
use kltvo::pipeline::{FrameInput, FrameOutcome, Mode, VoConfig, VoState};
use kltvo::synthetic::{
    dump_scene, generate_scene, load_scene, observe, render_sequence, scripted_occlusions, Observation,
    ObservationModel, SceneKind,
};
use kltvo::trackereval::{run_pairwise, run_survival, write_csv};

use crate::{calib, dataset, exit, EvalArgs, RunArgs, SynthArgs, TrackEvalArgs};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_image(path: &Path) -> Result<GrayImage> {
    GrayImage::load(path).with_context(|| format!("reading {}", path.display()))
}

/// Built-in defaults, then the config file, then flags.
pub fn effective_config(args: &RunArgs) -> Result<VoConfig> {
    let mut config = VoConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.apply_text(&text).with_context(|| format!("config {}", path.display()))?;
    }
    for kv in &args.set {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects key=value, got {kv:?}");
        };
        config.set(k.trim(), v)?;
    }
    if let Some(n) = args.max_features {
        config.max_features = n;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if args.ba_async {
        config.ba_async = true;
    }
    config.validate()?;
    Ok(config)
}

enum Source {
    Images(Vec<std::path::PathBuf>),
    Features(Vec<Vec<Observation>>),
}

pub fn run(args: &RunArgs) -> Result<u8> {
    let config = effective_config(args)?;
    let (cam, source, times) = if let Some(dir) = &args.dataset {
        let Some(calib_path) = &args.calib else {
            bail!("--dataset requires --calib");
        };
        let cam = calib::load(calib_path)?;
        let paths = dataset::image_paths(dir)?;
        let times = dataset::timestamps(dir, paths.len(), args.rate)?;
        (cam, Source::Images(paths), times)
    } else {
        let path = args.scene.as_ref().expect("clap requires an input");
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let (scene, mut obs) = load_scene(&text).with_context(|| format!("scene {}", path.display()))?;
        if obs.iter().all(Vec::is_empty) {
            bail!("{} has no observations", path.display());
        }
        obs.resize(scene.n_frames(), Vec::new());
        let cam = match &args.calib {
            Some(p) => calib::load(p)?,
            None => scene.cam,
        };
        (cam, Source::Features(obs), scene.timestamps)
    };
    let n = times.len();
    let mut vo = VoState::new(cam, config.clone())?;
    let mut busy = 0.0;
    let mut lost_at = None;
    for (f, &t) in times.iter().enumerate() {
        let image;
        let input = match &source {
            Source::Images(paths) => {
                image = load_image(&paths[f])?;
                FrameInput::Image(&image)
            }
            Source::Features(obs) => FrameInput::Features(&obs[f]),
        };
        let start = Instant::now();
        let outcome = vo.process_frame(input, t).with_context(|| format!("frame {f}"))?;
        busy += start.elapsed().as_secs_f64();
        if matches!(outcome, FrameOutcome::Lost) && vo.mode() == Mode::Lost {
            log::warn!("tracking lost at frame {f}");
            lost_at = Some(f);
            break;
        }
    }
    let start = Instant::now();
    vo.finish();
    busy += start.elapsed().as_secs_f64();
    let processed = lost_at.map_or(n, |f| f + 1);

    let trajectory = vo.trajectory();
    trajectory.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;

    let stats = vo.stats();
    let mut report = String::new();
    let _ = writeln!(report, "frames={n}");
    let _ = writeln!(report, "processed_frames={processed}");
    let _ = writeln!(report, "tracked_frames={}", trajectory.len());
    let _ = writeln!(report, "keyframes={}", vo.keyframes().len());
    let _ = writeln!(report, "landmarks={}", vo.active_landmarks());
    let _ = writeln!(report, "mean_ms_per_frame={:.3}", 1e3 * busy / processed.max(1) as f64);
    let _ = writeln!(report, "lost_episodes={}", stats.lost_episodes);
    let _ = writeln!(report, "init_restarts={}", stats.init_restarts);
    let _ = writeln!(report, "mean_tracked_features={:.1}", stats.mean_tracked());
    let _ = writeln!(
        report,
        "status={}",
        match lost_at {
            Some(f) => format!("lost_at_frame_{f}"),
            None if trajectory.is_empty() => "not_initialized".into(),
            None => "completed".into(),
        }
    );
    let _ = writeln!(report, "# effective configuration");
    let _ = write!(report, "{config}");
    print!("{report}");
    if let Some(path) = &args.report {
        write(path, &report)?;
    }

    // A run that never starts tracking counts as lost from the first frame.
    let lost_from = lost_at.or(trajectory.is_empty().then_some(0));
    Ok(match lost_from {
        Some(f) if 2 * f < n => exit::LOST,
        _ => exit::OK,
    })
}

pub fn eval(args: &EvalArgs) -> Result<u8> {
    let est = Trajectory::<f64>::load(&args.est).with_context(|| format!("estimate {}", args.est.display()))?;
    let gt = Trajectory::<f64>::load(&args.gt).with_context(|| format!("ground truth {}", args.gt.display()))?;
    let (m, report) = metrics(&est, &gt, args.max_dt)?;
    let csv = format!("ate_rmse,ate_pct,drift_pct\n{},{},{}\n", m.ate_rmse, m.ate_pct, m.drift_pct);
    print!("{csv}");
    if let Some(path) = &args.out {
        write(path, &csv)?;
    }
    if let Some(path) = &args.per_frame {
        let mut out = String::from("est_time,gt_time,error\n");
        for (p, e) in report.pairs.iter().zip(&report.errors) {
            let _ = writeln!(out, "{},{},{}", p.est_time, p.gt_time, e);
        }
        write(path, out)?;
    }
    Ok(exit::OK)
}

/// Landmark count, frame count and occlusion count used when not given.
fn synth_defaults(kind: SceneKind) -> (usize, usize, usize) {
    match kind {
        SceneKind::Planar => (300, 200, 0),
        SceneKind::Volumetric => (500, 200, 0),
        SceneKind::Loop => (600, 400, 200),
    }
}

pub fn synth(args: &SynthArgs) -> Result<u8> {
    let kind: SceneKind = args.kind.parse()?;
    let (landmarks, frames, occlusions) = synth_defaults(kind);
    let landmarks = args.landmarks.unwrap_or(landmarks);
    let frames = args.frames.unwrap_or(frames);
    let occlusions = args.occlusions.unwrap_or(occlusions);
    if !(args.noise >= 0.0 && args.noise.is_finite()) || !(0.0..1.0).contains(&args.dropout) {
        bail!("noise must be non-negative and dropout in [0, 1)");
    }
    let scene = generate_scene(kind, landmarks, frames, args.seed)?;
    let model = ObservationModel {
        pixel_sigma: args.noise,
        dropout: args.dropout,
        occlusions: scripted_occlusions(landmarks, frames, occlusions, args.max_occlusion, args.seed),
    };
    let obs = (0..frames).map(|f| observe(&scene, f, &model)).collect::<kltvo::Result<Vec<_>>>()?;

    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("scene.txt"), dump_scene(&scene, &obs))?;
    write(&out.join("gt.txt"), scene.ground_truth().to_text())?;
    write(&out.join("times.txt"), dataset::format_times(&scene.timestamps))?;
    write(&out.join("calib.txt"), calib::format(&scene.cam))?;
    if kind == SceneKind::Planar && !args.no_images {
        for (f, img) in render_sequence(&scene, args.seed.wrapping_add(1))?.iter().enumerate() {
            let path = out.join(format!("frame_{f:06}.png"));
            img.save_png(&path).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    println!("wrote {} {} frames to {}", kind.name(), frames, out.display());
    Ok(exit::OK)
}

pub fn track_eval(args: &TrackEvalArgs) -> Result<u8> {
    let images = dataset::image_paths(&args.images)?
        .iter()
        .map(|p| load_image(p))
        .collect::<Result<Vec<_>>>()?;
    let rows = match &args.reference {
        Some(reference) => {
            let first = load_image(reference)?;
            let pairs: Vec<_> = images.into_iter().map(|img| (first.clone(), img)).collect();
            run_pairwise(&pairs, (args.shift_x, args.shift_y), args.cells, args.fb_threshold)?
        }
        None => {
            let cam = args.calib.as_deref().map(calib::load).transpose()?;
            run_survival(&images, cam.as_ref(), args.cells, args.fb_threshold)?
        }
    };
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    if let Some(path) = &args.out {
        write(path, &csv)?;
    }
    Ok(exit::OK)
}

//! Acceptance suite. Runs every criterion in sequence and prints one line per criterion;
//! exits nonzero if any fails.
//!
//! Criteria with wall-clock limits are timed here, in one process, so they are not
//! distorted by other tests running in parallel.

use std::time::Instant;

use kltvo::evaluation::{metrics, Metrics, Trajectory, DEFAULT_MAX_DT};
use kltvo::geometry::{triangulate, CameraModel, Pose};
use kltvo::imageproc::{build_pyramid, detect_shi_tomasi, forward_backward_filter, track_pyr_lk, GrayImage, LkParams};
use kltvo::multiview::{decompose_essential, essential_5pt, p3p, Correspondence, EssentialMatrix};
use kltvo::optimizer::{
    default_ba_options, levenberg_marquardt, local_bundle_adjust, BaProblem, KeyframeRole, LmOptions, LmProblem,
    OptimizationWindow, RobustKernel,
};
use kltvo::pipeline::{FrameInput, VoConfig, VoState};
use kltvo::synthetic::{
    generate_scene, observe, perturb_window, render_sequence, render_textured_pair, scripted_occlusions,
    window_fixture, ObservationModel, SceneKind, SyntheticScene, Warp,
};
use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_rotation(rng: &mut impl Rng, max_angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(Vector3::new(
        rng.gen_range(-max_angle..max_angle),
        rng.gen_range(-max_angle..max_angle),
        rng.gen_range(-max_angle..max_angle),
    ))
}

// ---------------------------------------------------------------- geometry

fn triangulation_round_trip(rng: &mut ChaCha8Rng, cases: usize) -> f64 {
    let cam = CameraModel::pinhole(500.0, 500.0, 319.5, 239.5, 640, 480).unwrap();
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < cases {
        let a = Pose::from_center(random_rotation(rng, 0.2), Vector3::zeros());
        let center = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let b = Pose::from_center(random_rotation(rng, 0.2), center);
        let x = a.inverse().transform_point(&Vector3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(2.0..10.0),
        ));
        let (Ok(pa), Ok(pb)) = (cam.project(&a, &x), cam.project(&b, &x)) else {
            continue;
        };
        if !cam.contains(&pa) || !cam.contains(&pb) {
            continue;
        }
        // Keep only configurations with at least one degree of parallax.
        let ray_a = x - a.center();
        let ray_b = x - b.center();
        if ray_a.angle(&ray_b) < 1f64.to_radians() {
            continue;
        }
        let t = triangulate(&a, &b, &cam, &pa, &pb).unwrap();
        worst = worst.max((t - x).norm());
        done += 1;
    }
    worst
}

fn p3p_recovery(rng: &mut ChaCha8Rng, cases: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let pose = Pose::from_center(
            random_rotation(rng, 1.0),
            Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
        );
        let inv = pose.inverse();
        let points: [Vector3<f64>; 3] = std::array::from_fn(|_| {
            inv.transform_point(&Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(1.0..5.0),
            ))
        });
        let bearings = points.map(|p| pose.transform_point(&p).normalize());
        let best = p3p(&bearings, &points)
            .map(|sols| {
                sols.iter()
                    .map(|s| s.rotation.angle_to(&pose.rotation).max((s.center() - pose.center()).norm()))
                    .fold(f64::INFINITY, f64::min)
            })
            .unwrap_or(f64::INFINITY);
        worst = worst.max(best);
    }
    worst
}

fn two_view_scene(rng: &mut ChaCha8Rng, pose: &Pose<f64>, n: usize) -> Vec<Correspondence<f64>> {
    let mut out = Vec::new();
    while out.len() < n {
        let x = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(3.0..8.0));
        let xb = pose.transform_point(&x);
        if xb.z > 0.5 {
            out.push(Correspondence::new(x, xb));
        }
    }
    out
}

fn random_relative_pose(rng: &mut ChaCha8Rng) -> Pose<f64> {
    Pose::new(
        random_rotation(rng, 0.3),
        Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5)),
    )
}

/// Largest `|bᵀEa|` over every returned candidate and its five input correspondences.
fn five_point_residual(rng: &mut ChaCha8Rng, cases: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let pose = random_relative_pose(rng);
        let c = two_view_scene(rng, &pose, 5);
        let a: Vec<_> = c.iter().map(|c| c.a).collect();
        let b: Vec<_> = c.iter().map(|c| c.b).collect();
        match essential_5pt(&a, &b) {
            Ok(sols) if !sols.is_empty() => {
                for e in &sols {
                    for ci in &c {
                        worst = worst.max(e.algebraic_residual(ci).abs());
                    }
                }
            }
            _ => return f64::INFINITY,
        }
    }
    worst
}

/// Largest rotation or unit-translation error of the decomposed 5-point candidate closest
/// to the true essential matrix.
fn decomposition_recovery(rng: &mut ChaCha8Rng, cases: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let pose = random_relative_pose(rng);
        let matches = two_view_scene(rng, &pose, 20);
        let a: Vec<_> = matches[..5].iter().map(|c| c.a).collect();
        let b: Vec<_> = matches[..5].iter().map(|c| c.b).collect();
        let Ok(sols) = essential_5pt(&a, &b) else {
            return f64::INFINITY;
        };
        let truth = EssentialMatrix::from_pose(&pose);
        let dist = |m: &EssentialMatrix<f64>| {
            (m.matrix() - truth.matrix()).norm().min((m.matrix() + truth.matrix()).norm())
        };
        let Some(e) = sols.iter().min_by(|p, q| dist(p).total_cmp(&dist(q))) else {
            return f64::INFINITY;
        };
        let err = match decompose_essential(e, &matches) {
            Ok((est, _)) => est
                .rotation
                .angle_to(&pose.rotation)
                .max((est.translation - pose.translation.normalize()).norm()),
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(err);
    }
    worst
}

fn geometry_suite() -> Outcome {
    const CASES: usize = 1000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tri = triangulation_round_trip(&mut rng, CASES);
    let p3 = p3p_recovery(&mut rng, CASES);
    let fp = five_point_residual(&mut rng, CASES);
    let dec = decomposition_recovery(&mut rng, CASES);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        tri < 1e-9 && p3 < 1e-8 && fp < 1e-10 && dec < 1e-8 && secs < 30.0,
        format!(
            "{CASES} cases each: triangulation {tri:.1e} (<1e-9), P3P {p3:.1e} (<1e-8), \
             5-point residual {fp:.1e} (<1e-10), decomposition {dec:.1e} (<1e-8), {secs:.1} s (<30)"
        ),
    )
}

// ---------------------------------------------------------------- optimizer

fn monotone(costs: &[f64]) -> bool {
    costs.windows(2).all(|w| w[1] <= w[0])
}

fn optimizer_suite() -> Outcome {
    // Jacobian against central differences.
    let h = 1e-6;
    let mut jac_worst: f64 = 0.0;
    for seed in 0..100 {
        let fx = window_fixture(1000 + seed, 3, 8, 1, 0.5);
        let mut w = perturb_window(&fx.window, 2000 + seed, 0.05, 0.02, 0.05);
        w.keyframes[1].role = KeyframeRole::ScaleFixed;
        let p = BaProblem::new(&w, &fx.cam, RobustKernel::trivial()).unwrap();
        let x = BaProblem::initial_state(&w);
        let j = p.jacobian_dense(&x).unwrap();
        for c in 0..p.num_parameters() {
            let mut step = DVector::zeros(p.num_parameters());
            step[c] = h;
            let plus = p.residuals(&p.retract(&x, &step)).unwrap();
            step[c] = -h;
            let minus = p.residuals(&p.retract(&x, &step)).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            jac_worst = jac_worst.max((j.column(c) - &fd).norm() / fd.norm().max(1e-3));
        }
    }

    // Schur complement against the dense normal equations.
    let huber = RobustKernel::huber(2.0).unwrap();
    let mut schur_worst: f64 = 0.0;
    for seed in 0..20 {
        let fx = window_fixture(3000 + seed, 5, 50, 1, 0.5);
        let mut w = perturb_window(&fx.window, 4000 + seed, 0.05, 0.01, 0.02);
        w.keyframes[1].role = KeyframeRole::ScaleFixed;
        let mut p = BaProblem::new(&w, &fx.cam, huber).unwrap();
        p.linearize(&BaProblem::initial_state(&w)).unwrap();
        for lambda in [0.0, 1e-4, 1.0] {
            let (Some(a), Some(b)) = (p.solve_schur(lambda), p.solve_dense(lambda)) else {
                schur_worst = f64::INFINITY;
                continue;
            };
            schur_worst = schur_worst.max((&a - &b).amax() / b.amax());
        }
    }

    // Every optimization run below must only ever accept cost decreases.
    let mut runs = 0;
    let mut monotone_runs = 0;
    let mut check = |costs: &[f64], initial: f64, last: f64| {
        runs += 1;
        if monotone(costs) && last <= initial {
            monotone_runs += 1;
        }
    };
    let opts = default_ba_options();
    for seed in 0..20 {
        let fx = window_fixture(5000 + seed, 5, 40, 2, 0.5);
        let start = perturb_window(&fx.window, 6000 + seed, 0.05, 0.01, 0.02);
        for kernel in [huber, RobustKernel::trivial()] {
            let (_, s) = local_bundle_adjust(&start, &fx.cam, kernel, &opts).unwrap();
            check(&s.accepted_costs, s.initial_cost, s.final_cost);
        }
    }
    let rosenbrock = levenberg_marquardt(
        |x: &DVector<f64>| DVector::from_vec(vec![1.0 - x[0], 10.0 * (x[1] - x[0] * x[0])]),
        |x: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -20.0 * x[0], 10.0]),
        DVector::from_vec(vec![-1.2, 1.0]),
        &LmOptions::default(),
    )
    .unwrap();
    check(&rosenbrock.accepted_costs, rosenbrock.initial_cost, rosenbrock.final_cost);

    // Paired Huber oracle: one observation moved by 50 px. On the reference fixture the
    // robust result stays within 3× of the outlier-free error and least squares is worse.
    // Across random fixtures the outlier is moved again to 500 px: a bounded influence
    // leaves the robust result where it was, while the least-squares error keeps growing.
    let error = |w: &OptimizationWindow<f64>, truth: &OptimizationWindow<f64>| {
        let lm = w
            .landmarks
            .iter()
            .zip(&truth.landmarks)
            .map(|(a, b)| (a.position - b.position).norm())
            .fold(0.0, f64::max);
        let kf = w
            .keyframes
            .iter()
            .zip(&truth.keyframes)
            .map(|(a, b)| {
                let (r, t) = a.pose.distance(&b.pose);
                r.max(t)
            })
            .fold(0.0, f64::max);
        lm.max(kf)
    };
    let mut paired = |fixture_seed: u64, perturb_seed: u64| {
        let fx = window_fixture(fixture_seed, 5, 40, 2, 0.5);
        let start = perturb_window(&fx.window, perturb_seed, 0.05, 0.01, 0.02);
        let target = start.observations.iter().position(|o| o.keyframe_id == 4).unwrap();
        let mut errs = [[0.0; 2]; 3];
        for (row, shift) in [0.0, 50.0, 500.0].into_iter().enumerate() {
            let mut w = start.clone();
            w.observations[target].pixel.x += shift;
            for (col, kernel) in [huber, RobustKernel::trivial()].into_iter().enumerate() {
                let (out, s) = local_bundle_adjust(&w, &fx.cam, kernel, &opts).unwrap();
                check(&s.accepted_costs, s.initial_cost, s.final_cost);
                errs[row][col] = error(&out, &fx.window);
            }
        }
        errs
    };
    let reference = paired(5, 6);
    let (base, robust, plain) = (reference[0][0], reference[1][0], reference[1][1]);
    let reference_ok = robust <= 3.0 * base && plain > robust;
    let mut bounded = 0;
    let mut within_3x = 0;
    let mut worst_ratio: f64 = 0.0;
    let sweep: usize = 10;
    for seed in 0..sweep {
        let e = paired(7000 + seed as u64, 8000 + seed as u64);
        let ratio = e[1][0] / e[0][0];
        worst_ratio = worst_ratio.max(ratio);
        within_3x += usize::from(ratio <= 3.0);
        let robust_flat = e[2][0] <= 1.1 * e[1][0];
        let plain_grows = e[2][1] >= 5.0 * e[1][1] && e[1][1] > e[1][0];
        bounded += usize::from(robust_flat && plain_grows);
    }

    outcome(
        jac_worst < 1e-5 && schur_worst < 1e-9 && monotone_runs == runs && reference_ok && bounded == sweep,
        format!(
            "Jacobian max rel err {jac_worst:.1e} over 100 windows (<1e-5), Schur vs dense {schur_worst:.1e} (<1e-9), \
             monotone cost {monotone_runs}/{runs} runs, Huber paired: 50 px outlier error {:.2}x no-outlier (<=3x), \
             least squares {:.1}x; bounded influence (50->500 px) on {bounded}/{sweep} random fixtures \
             (3x ratio held on {within_3x}/{sweep}, worst {worst_ratio:.1}x)",
            robust / base,
            plain / base
        ),
    )
}

// ---------------------------------------------------------------- tracker

fn percentile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * q).round() as usize]
}

fn tracker_suite() -> Outcome {
    let params = LkParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_median: f64 = 0.0;
    let mut worst_p95: f64 = 0.0;
    let mut min_tracked: f64 = 1.0;
    for (i, mag) in [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0].into_iter().enumerate() {
        let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let shift = Vector2::new(mag * ang.cos(), mag * ang.sin());
        let (a, b, flow) = render_textured_pair(100 + i as u64, Warp::Translation(shift), 640, 480);
        let pa = build_pyramid(&a, 4).unwrap();
        let pb = build_pyramid(&b, 4).unwrap();
        let pts: Vec<_> = detect_shi_tomasi(&a, 500, &[], 250, 0.01)
            .into_iter()
            .filter(|p| {
                let q = p.cast::<f64>() + flow.at(&p.cast::<f64>());
                q.x > 12.0 && q.y > 12.0 && q.x < 627.0 && q.y < 467.0
            })
            .collect();
        let tracks = track_pyr_lk(&pa, &pb, &pts, &pts, &params);
        let errs: Vec<f64> = pts
            .iter()
            .zip(&tracks)
            .filter(|(_, t)| t.is_tracked())
            .map(|(p, t)| (t.position.cast::<f64>() - (p.cast::<f64>() + flow.at(&p.cast::<f64>()))).norm())
            .collect();
        min_tracked = min_tracked.min(errs.len() as f64 / pts.len() as f64);
        if errs.is_empty() {
            worst_median = f64::INFINITY;
            continue;
        }
        worst_median = worst_median.max(percentile(errs.clone(), 0.5));
        worst_p95 = worst_p95.max(percentile(errs, 0.95));
    }

    // Destinations of every fifth corner are overwritten with noise.
    let mut planted = 0;
    let mut survivors = 0;
    for seed in 0..10u64 {
        let shift = Vector2::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
        let (a, b, flow) = render_textured_pair(200 + seed, Warp::Translation(shift), 640, 480);
        let pts = detect_shi_tomasi(&a, 300, &[], 300, 0.01);
        let mut occluded = b.clone();
        let mut noise = ChaCha8Rng::seed_from_u64(300 + seed);
        let mut targets = Vec::new();
        for (i, p) in pts.iter().enumerate().filter(|(i, _)| i % 5 == 0) {
            let q = p.cast::<f64>() + flow.at(&p.cast::<f64>());
            let (cx, cy) = (q.x.round() as i64, q.y.round() as i64);
            for y in cy - 20..=cy + 20 {
                for x in cx - 20..=cx + 20 {
                    if x >= 0 && y >= 0 && (x as usize) < 640 && (y as usize) < 480 {
                        occluded.set(x as usize, y as usize, noise.gen());
                    }
                }
            }
            targets.push(i);
        }
        let pa = build_pyramid(&a, 4).unwrap();
        let pb = build_pyramid(&occluded, 4).unwrap();
        let fwd = track_pyr_lk(&pa, &pb, &pts, &pts, &params);
        let fb = forward_backward_filter(&pa, &pb, &pts, &fwd, 2.0, &params);
        planted += targets.len();
        survivors += targets.iter().filter(|&&i| fb[i].is_tracked()).count();
    }

    outcome(
        worst_median < 0.3 && worst_p95 < 1.0 && survivors == 0,
        format!(
            "shifts 5-40 px, 4 levels: worst median {worst_median:.3} px (<0.3), worst p95 {worst_p95:.3} px (<1.0), \
             min tracked {:.0}%; occlusions: {survivors} of {planted} planted survive FB at 2 px (0)",
            100.0 * min_tracked
        ),
    )
}

// ---------------------------------------------------------------- end to end

struct RunResult {
    trajectory: Trajectory<f64>,
    metrics: Option<Metrics>,
    mean_tracked: f64,
    seconds: f64,
    ms_per_frame: f64,
}

fn run_features(scene: &SyntheticScene, model: &ObservationModel, config: VoConfig) -> RunResult {
    let observations: Vec<_> = (0..scene.n_frames()).map(|f| observe(scene, f, model).unwrap()).collect();
    let mut vo = VoState::new(scene.cam, config).unwrap();
    let start = Instant::now();
    for (f, obs) in observations.iter().enumerate() {
        vo.process_frame(FrameInput::Features(obs), scene.timestamps[f]).unwrap();
    }
    vo.finish();
    let seconds = start.elapsed().as_secs_f64();
    finish_run(vo, scene, seconds)
}

fn run_images(scene: &SyntheticScene, images: &[GrayImage], config: VoConfig) -> RunResult {
    let mut vo = VoState::new(scene.cam, config).unwrap();
    let start = Instant::now();
    for (f, img) in images.iter().enumerate() {
        vo.process_frame(FrameInput::Image(img), scene.timestamps[f]).unwrap();
    }
    vo.finish();
    let seconds = start.elapsed().as_secs_f64();
    finish_run(vo, scene, seconds)
}

fn finish_run(vo: VoState, scene: &SyntheticScene, seconds: f64) -> RunResult {
    let trajectory = vo.trajectory();
    let metrics = metrics(&trajectory, &scene.ground_truth(), DEFAULT_MAX_DT).ok().map(|(m, _)| m);
    RunResult {
        trajectory,
        metrics,
        mean_tracked: vo.stats().mean_tracked(),
        seconds,
        ms_per_frame: 1e3 * seconds / scene.n_frames() as f64,
    }
}

fn loop_scenario() -> (SyntheticScene, ObservationModel) {
    let (landmarks, frames) = (600, 400);
    let scene = generate_scene(SceneKind::Loop, landmarks, frames, 11).unwrap();
    let model = ObservationModel {
        pixel_sigma: 0.3,
        dropout: 0.05,
        occlusions: scripted_occlusions(landmarks, frames, 200, 3, 12),
    };
    (scene, model)
}

fn end_to_end_loop(first: &RunResult) -> Outcome {
    let (scene, model) = loop_scenario();
    let off = VoConfig {
        retracking: false,
        ..VoConfig::default()
    };
    let without = run_features(&scene, &model, off);
    let (Some(m), Some(m_off)) = (first.metrics, without.metrics) else {
        return outcome(false, "evaluation failed (no trajectory to align)".into());
    };
    let mechanism = m_off.drift_pct > m.drift_pct || without.mean_tracked < first.mean_tracked;
    outcome(
        m.ate_pct < 1.0 && m.drift_pct < 1.0 && mechanism && first.seconds < 120.0,
        format!(
            "600 landmarks, 400 frames, 0.3 px, 5% dropout, 200 occlusions <=3 frames: ATE {:.3}% (<1), drift {:.3}% (<1), \
             {:.2} s (<120); retracking off: drift {:.3}%, mean tracked {:.1} vs {:.1}",
            m.ate_pct, m.drift_pct, first.seconds, m_off.drift_pct, without.mean_tracked, first.mean_tracked
        ),
    )
}

fn image_mode(run: &RunResult, frames: usize) -> Outcome {
    let tracked = run.trajectory.len() as f64 / frames as f64;
    let Some(m) = run.metrics else {
        return outcome(false, format!("no trajectory to evaluate ({} poses)", run.trajectory.len()));
    };
    outcome(
        tracked >= 0.95 && m.ate_pct < 2.0,
        format!(
            "textured plane 640x480, {frames} frames: tracked {:.1}% of frames (>=95), ATE {:.4}% (<2)",
            100.0 * tracked,
            m.ate_pct
        ),
    )
}

fn determinism(a: &[&RunResult; 2], b: &[&RunResult; 2]) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut same = true;
    for (name, pair) in [("features", a), ("images", b)] {
        let paths: Vec<_> = (0..2).map(|i| dir.path().join(format!("{name}{i}.txt"))).collect();
        for (r, p) in pair.iter().zip(&paths) {
            r.trajectory.save(p).unwrap();
        }
        let bytes: Vec<_> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
        same &= bytes[0] == bytes[1] && !bytes[0].is_empty();
    }
    outcome(
        same,
        "two synchronous runs each of the loop (features) and plane (images) scenarios: trajectory files byte-identical"
            .into(),
    )
}

fn performance(run: &RunResult) -> Outcome {
    let fps = 1e3 / run.ms_per_frame;
    let soft = if fps >= 20.0 { "met" } else { "not met" };
    outcome(
        fps >= 10.0,
        format!(
            "image mode 640x480, 250 features, synchronous: {:.1} ms/frame = {fps:.1} fps (fail below 10; 20 fps target {soft})",
            run.ms_per_frame
        ),
    )
}

fn main() {
    // The test harness passes flags such as --list; this binary has a single entry point.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    println!(
        "[INFO] full-scale dataset results are not reproducible without the external datasets; \
         acceptance rests on the suites below"
    );

    report("geometry oracle suite", geometry_suite());
    report("optimizer suite", optimizer_suite());
    report("tracker suite", tracker_suite());

    let (scene, model) = loop_scenario();
    let loop_a = run_features(&scene, &model, VoConfig::default());
    let loop_b = run_features(&scene, &model, VoConfig::default());
    report("end-to-end synthetic loop", end_to_end_loop(&loop_a));

    let frames = 200;
    let plane = generate_scene(SceneKind::Planar, 300, frames, 21).unwrap();
    let images = render_sequence(&plane, 22).unwrap();
    let img_a = run_images(&plane, &images, VoConfig::default());
    let img_b = run_images(&plane, &images, VoConfig::default());
    report("image-mode end-to-end", image_mode(&img_a, frames));

    report("determinism", determinism(&[&loop_a, &loop_b], &[&img_a, &img_b]));
    report("performance", performance(&img_a));

    println!(
        "[SKIP] dataset drift and ATE bands: not run, no external dataset supplied \
         (optional criterion, checked only when the released datasets are available)"
    );
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}

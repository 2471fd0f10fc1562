//! `kltvo` command-line driver.

mod calib;
mod commands;
mod dataset;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INPUT: u8 = 2;
    pub const LOST: u8 = 3;
    pub const NUMERIC: u8 = 4;
}

#[derive(Parser)]
#[command(name = "kltvo", version, about = "Monocular keyframe visual odometry")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over an image directory or a synthetic scene dump.
    Run(RunArgs),
    /// Compare an estimated trajectory against ground truth.
    Eval(EvalArgs),
    /// Write synthetic fixtures: scene dump, ground truth, calibration and images.
    Synth(SynthArgs),
    /// Count how many detected features survive KLT tracking.
    TrackEval(TrackEvalArgs),
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["dataset", "scene"])))]
pub struct RunArgs {
    /// Directory of grayscale images, optionally with times.txt.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Scene dump whose observations are fed as pre-tracked features.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Calibration file; required with --dataset, overrides the scene camera otherwise.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output trajectory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the run report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Frame rate used when the dataset has no times.txt.
    #[arg(long, default_value_t = 16.0)]
    pub rate: f64,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run bundle adjustment on a background thread.
    #[arg(long)]
    pub ba_async: bool,
    /// Any configuration key, as key=value; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Write the metrics CSV here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the aligned error of every associated pair as CSV.
    #[arg(long)]
    pub per_frame: Option<PathBuf>,
    /// Largest timestamp difference for association, in seconds.
    #[arg(long, default_value_t = kltvo::evaluation::DEFAULT_MAX_DT)]
    pub max_dt: f64,
}

#[derive(Args)]
pub struct SynthArgs {
    /// planar, volumetric or loop.
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub landmarks: Option<usize>,
    /// Observation noise in pixels.
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    /// Probability of dropping an observation.
    #[arg(long, default_value_t = 0.05)]
    pub dropout: f64,
    /// Number of scripted occlusions.
    #[arg(long)]
    pub occlusions: Option<usize>,
    /// Longest scripted occlusion, in frames.
    #[arg(long, default_value_t = 3)]
    pub max_occlusion: usize,
    /// Skip rendering images of planar scenes.
    #[arg(long)]
    pub no_images: bool,
}

#[derive(Args)]
pub struct TrackEvalArgs {
    /// Directory of images, tracked in lexicographic order.
    #[arg(long)]
    pub images: PathBuf,
    /// Enables the epipolar check in sequential mode.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Pairwise mode: track from this image into each image of the directory.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = kltvo::trackereval::DEFAULT_PAIR_SHIFT.0)]
    pub shift_x: i32,
    #[arg(long, default_value_t = kltvo::trackereval::DEFAULT_PAIR_SHIFT.1)]
    pub shift_y: i32,
    #[arg(long, default_value_t = kltvo::trackereval::DEFAULT_GRID_CELLS)]
    pub cells: usize,
    #[arg(long, default_value_t = kltvo::trackereval::DEFAULT_FB_THRESHOLD_PX)]
    pub fb_threshold: f64,
    /// Write the CSV here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit status for a failure, from the library error in its chain if there is one.
fn failure_code(err: &anyhow::Error) -> u8 {
    use kltvo::Error::*;
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<kltvo::Error>()) else {
        return exit::INPUT;
    };
    match e {
        TrackingLost => exit::LOST,
        BehindCamera { .. }
        | NonConvergence { .. }
        | LowParallax { .. }
        | Cheirality
        | Degenerate(_)
        | AmbiguousDecomposition
        | EstimationFailure(_)
        | RefinementFailure
        | NonFinite(_)
        | InvalidWindow(_) => exit::NUMERIC,
        _ => exit::INPUT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Run(a) => commands::run(a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a),
        Command::TrackEval(a) => commands::track_eval(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(failure_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let wrap = |e: kltvo::Error| anyhow::Error::new(e).context("while running");
        assert_eq!(failure_code(&wrap(kltvo::Error::InvalidCalibration("fx".into()))), exit::INPUT);
        assert_eq!(failure_code(&wrap(kltvo::Error::NonFinite("cost"))), exit::NUMERIC);
        assert_eq!(failure_code(&wrap(kltvo::Error::TrackingLost)), exit::LOST);
        assert_eq!(failure_code(&anyhow::anyhow!("no images")), exit::INPUT);
    }

    #[test]
    fn arguments_parse() {
        <Cli as clap::CommandFactory>::command().debug_assert();
    }
}

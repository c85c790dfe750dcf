//! `facecap` command-line front end.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "facecap", version, about = "Face capture geometry, rendering and tracking metrics")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// `key = value` file supplying defaults for unset flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random stream of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RenderMode {
    Shaded,
    Semantic,
    Normals,
    Depth,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the posed mesh of one track frame (.obj, or .fwb).
    Pose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        track: PathBuf,
        #[arg(long)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render every frame of a track.
    Render {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        track: PathBuf,
        #[arg(long, value_enum)]
        mode: RenderMode,
        /// Light evaluator file; required for shaded mode.
        #[arg(long)]
        lights: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        video_index: usize,
        /// Output size `WxH`; defaults to the size the track camera was made for.
        #[arg(long, value_parser = settings::parse_size)]
        size: Option<(usize, usize)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Semantic IoU of the tracked geometry against reference masks.
    EvalIou(commands::EvalArgs),
    /// Geometry-based warp PSNR of the tracked geometry.
    EvalWarp(commands::EvalArgs),
    /// Fit the neural expression basis to the model's linear basis.
    PretrainDeformer {
        #[arg(long)]
        model: PathBuf,
        /// Positional-encoding frequencies.
        #[arg(long = "L")]
        frequencies: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Weights file; the loss history goes next to it as `<stem>.loss.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Isotropic remeshing with reprojection of every model table.
    Remesh {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target_edge: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the synthetic head, trajectories, frames and masks.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        noise_deg: Option<f64>,
        #[arg(long, value_parser = settings::parse_size)]
        size: Option<(usize, usize)>,
        #[arg(long)]
        fps: Option<f64>,
    },
    /// Least-squares expression coefficients of a rest-pose target mesh.
    Fit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .any(|e| e.downcast_ref::<facecap::Error>().is_some_and(facecap::Error::is_numerical));
    if numerical {
        2
    } else {
        1
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let s = settings::Settings::load(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Pose {
            model,
            track,
            frame,
            out,
        } => commands::pose(&model, &track, frame, &out),
        Command::Render {
            model,
            track,
            mode,
            lights,
            video_index,
            size,
            out,
        } => commands::render(&model, &track, mode, lights.as_deref(), video_index, size, &out),
        Command::EvalIou(args) => commands::eval(&s, &args, true),
        Command::EvalWarp(args) => commands::eval(&s, &args, false),
        Command::PretrainDeformer {
            model,
            frequencies,
            iters,
            lr,
            out,
        } => commands::pretrain(&s, &model, frequencies, iters, lr, &out),
        Command::Remesh {
            model,
            target_edge,
            iterations,
            out,
        } => commands::remesh(&s, &model, target_edge, iterations, &out),
        Command::Synth {
            out,
            frames,
            noise_deg,
            size,
            fps,
        } => commands::synth(&s, &out, frames, noise_deg, size, fps),
        Command::Fit { model, target, out } => commands::fit(&model, &target, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Optic nerve sheath diameter analysis for ocular ultrasound video.
#[derive(Parser, Debug)]
#[command(name = "onsd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled phantom dataset with a manifest.
    Phantom(PhantomArgs),
    /// Detect globe and nerve boxes in every frame of a video.
    Detect(DetectArgs),
    /// Measure the sheath width on one frame.
    Measure(MeasureArgs),
    /// Train the sparse-coding dictionary and frame classifier.
    Train(TrainArgs),
    /// Predict the verdict for one video.
    Predict(PredictArgs),
    /// Grouped k-fold evaluation over a manifest.
    Eval(EvalArgs),
    /// Draw the measurement overlay for one frame.
    Render(RenderArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SystemArg {
    Width,
    Sparse,
}

#[derive(Args, Debug)]
struct PhantomArgs {
    /// Output directory for frames and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// JSON phantom spec; every video uses it with seeds spec.seed + i.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    #[arg(long, default_value_t = 2)]
    videos_per_patient: usize,
    #[arg(long, default_value_t = 3.0)]
    width_min: f64,
    #[arg(long, default_value_t = 7.0)]
    width_max: f64,
    /// Lower end of the excluded open width interval.
    #[arg(long, default_value_t = 4.8)]
    exclude_min: f64,
    #[arg(long, default_value_t = 5.2)]
    exclude_max: f64,
    /// Sample widths over the whole range.
    #[arg(long)]
    no_exclude: bool,
    #[arg(long)]
    speckle: Option<f64>,
    #[arg(long)]
    jitter: Option<u32>,
}

#[derive(Args, Debug)]
struct VideoArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    video: String,
    /// Annotation file to use instead of the classical detector.
    #[arg(long)]
    detections: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[command(flatten)]
    video: VideoArgs,
    /// Write detections here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MeasureArgs {
    #[command(flatten)]
    video: VideoArgs,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// External 16x128 mask (PGM/PBM) to use instead of the classical segmenter.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Directory for crop.pgm, mask.pgm and overlay.png.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for dictionary.bin, classifier.bin and their sidecars.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    kernels: usize,
    #[arg(long, default_value_t = 8)]
    kernel_side: usize,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[arg(long, default_value_t = 100)]
    n_steps: usize,
    #[arg(long, default_value_t = 0.003)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    stride: usize,
    /// Learn the dictionary on whole frames rather than nerve regions.
    #[arg(long)]
    full_frames: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    video: VideoArgs,
    #[arg(long, value_enum, default_value_t = SystemArg::Width)]
    system: SystemArg,
    #[arg(long, default_value_t = 5)]
    stride: usize,
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Leave widths from crops that ran off the frame out of the mean.
    #[arg(long)]
    exclude_partial: bool,
    /// Verdict JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-frame overlay images.
    #[arg(long)]
    render: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = SystemArg::Width)]
    system: SystemArg,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 5)]
    stride: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Directory for report.json and report.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[command(flatten)]
    video: VideoArgs,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Output image; `.png` for PNG, anything else for binary PPM.
    #[arg(long)]
    out: PathBuf,
    /// Also draw the detection boxes.
    #[arg(long)]
    boxes: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Phantom(a) => commands::phantom(a),
        Command::Detect(a) => commands::detect(a),
        Command::Measure(a) => commands::measure(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::Render(a) => commands::render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

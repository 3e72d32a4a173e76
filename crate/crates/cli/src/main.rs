//! `handforge` command-line tool.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on validation or runtime
//! errors (including a failed gradient audit).

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use report::Format;

#[derive(Debug, Parser)]
#[command(name = "handforge", version, about = "Articulated hand model toolkit")]
pub struct Cli {
    /// Model asset; the built-in procedural hand is used when absent.
    #[arg(long, global = true, env = "HANDFORGE_MODEL")]
    pub model: Option<PathBuf>,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: Format,

    /// Worker threads for parallel commands (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or check model assets.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Evaluate the layer: parameters to joints and mesh.
    Forward(ForwardArgs),
    /// Compare analytic derivatives with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Fit parameters to target joints and optionally a target mesh.
    Fit(FitArgs),
    /// Synthetic dataset tools.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Render one parameter set to depth and mask images.
    Render(RenderArgs),
    /// Crop and normalise depth frames.
    Preprocess(PreprocessArgs),
}

#[derive(Debug, Subcommand)]
pub enum ModelCommand {
    /// Write the procedural hand asset.
    Gen(ModelGenArgs),
    /// Load an asset and report its dimensions.
    Validate(ModelValidateArgs),
}

#[derive(Debug, Args)]
pub struct ModelGenArgs {
    /// Generator settings (TOML); flags override the file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Surface noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path; standard output when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelValidateArgs {
    /// Asset to check; defaults to --model.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    /// Parameters as JSON (`delta_theta`, `alpha`, `beta`) or an annotation
    /// CSV; neutral parameters when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Directory for `joints.csv` and `mesh.obj`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random configurations.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    GaussNewton,
    GradientDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Block {
    DeltaTheta,
    Alpha,
    Beta,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Target joints: an annotation CSV or a JSON array of `[x, y, z]`.
    #[arg(long)]
    pub targets: PathBuf,
    /// Target mesh (OBJ) enabling the vertex term.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Initial parameters (JSON or annotation CSV); neutral when absent.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gauss-newton")]
    pub method: Method,
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,
    /// Stop once mean joint and vertex errors are below this (mm).
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Free parameter blocks.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "delta-theta,alpha,beta")]
    pub free: Vec<Block>,
    /// Let pose and bone scales leave their bounds.
    #[arg(long)]
    pub unbounded: bool,
    /// Write the fitted parameters as JSON.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also print the objective after every accepted step.
    #[arg(long)]
    pub history: bool,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Sample, render and write a dataset.
    Gen(DatasetGenArgs),
}

#[derive(Debug, Args)]
pub struct DatasetGenArgs {
    /// Sampling ranges (TOML) with an optional `[camera]` table; flags
    /// override the file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Parameters as JSON or an annotation CSV.
    #[arg(long)]
    pub params: PathBuf,
    /// Camera intrinsics (TOML); the default 320x240 camera when absent.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
    /// File name stem.
    #[arg(long, default_value = "render")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Dataset directories (with a manifest) or 16-bit depth PGM files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Camera intrinsics (TOML) for bare PGM inputs.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Cube half-extent (mm).
    #[arg(long, default_value_t = handforge::preprocess::DEFAULT_HALF_EXTENT)]
    pub half_extent: f64,
    /// Output side length (pixels).
    #[arg(long, default_value_t = handforge::preprocess::DEFAULT_OUTPUT_SIZE)]
    pub size: usize,
    /// Treat inputs as real frames: keep only pixels within 250 mm of the
    /// nearest one.
    #[arg(long)]
    pub real: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(anyhow::Error::from)
            .and_then(|pool| pool.install(|| commands::run(&cli))),
        None => commands::run(&cli),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

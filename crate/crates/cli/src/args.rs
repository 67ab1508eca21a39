use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "brush",
    version,
    about = "Region-targeted diffusion editing from the command line"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Plain generation from a base seed.
    Generate(GenerateArgs),
    /// Add one mask to a job and run the brush procedure.
    Edit(EditArgs),
    /// Run a grid of (alpha, n, seed) edits and write an image grid and CSV.
    Sweep(SweepArgs),
    /// Serve a mock denoiser over the wire protocol.
    MockDenoiser(MockArgs),
    /// Write a demo mixture file for the analytic backend.
    InitGmm(InitGmmArgs),
}

#[derive(Args, Debug)]
pub struct BackendArg {
    /// `analytic:<mixture.json>` or `host:port` of a denoiser server.
    #[arg(long, env = "BRUSH_BACKEND")]
    pub backend: String,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, env = "BRUSH_PROMPT", default_value = "")]
    pub prompt: String,
    /// Base seed; -1 draws one and prints it.
    #[arg(long, env = "BRUSH_SEED", default_value_t = -1, allow_hyphen_values = true)]
    pub seed: i64,
    #[arg(long, env = "BRUSH_STEPS", default_value_t = 50)]
    pub steps: usize,
    #[arg(long, env = "BRUSH_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendArg,
    /// Latent shape `c,h,w`; required by remote backends without a default.
    #[arg(long, env = "BRUSH_SHAPE")]
    pub shape: Option<String>,
    #[arg(long, env = "BRUSH_SIGMA_MIN")]
    pub sigma_min: Option<f64>,
    #[arg(long, env = "BRUSH_SIGMA_MAX")]
    pub sigma_max: Option<f64>,
    #[arg(long, env = "BRUSH_RHO")]
    pub rho: Option<f64>,
    /// Merge step t; defaults to N-10.
    #[arg(long, env = "BRUSH_MERGE_STEP")]
    pub merge_step: Option<usize>,
    #[arg(long, env = "BRUSH_S_CHURN")]
    pub s_churn: Option<f64>,
    /// Where to write the job JSON; defaults to the output path with `.json`.
    #[arg(long, env = "BRUSH_JOB_OUT")]
    pub job_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EditArgs {
    #[arg(long, env = "BRUSH_JOB")]
    pub job: PathBuf,
    #[arg(long, env = "BRUSH_MASK")]
    pub mask: PathBuf,
    /// Injection step.
    #[arg(long, env = "BRUSH_N")]
    pub n: usize,
    /// Mask strength.
    #[arg(long, env = "BRUSH_ALPHA")]
    pub alpha: f64,
    /// Branch seed; -1 draws one.
    #[arg(long, env = "BRUSH_MASK_SEED", default_value_t = -1, allow_hyphen_values = true)]
    pub mask_seed: i64,
    #[arg(long, env = "BRUSH_MASK_ID")]
    pub mask_id: Option<String>,
    #[arg(long, env = "BRUSH_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendArg,
    #[arg(long, env = "BRUSH_JOB_OUT")]
    pub job_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, env = "BRUSH_JOB")]
    pub job: PathBuf,
    #[arg(long, env = "BRUSH_MASK")]
    pub mask: PathBuf,
    #[arg(long, env = "BRUSH_ALPHAS", value_delimiter = ',')]
    pub alphas: Vec<f64>,
    #[arg(long, env = "BRUSH_NS", value_delimiter = ',')]
    pub ns: Vec<usize>,
    /// Number of branch seeds per cell.
    #[arg(long, env = "BRUSH_SEEDS", default_value_t = 1)]
    pub seeds: usize,
    /// First branch seed; cell seeds are `seed_start..seed_start+seeds`.
    #[arg(long, env = "BRUSH_SEED_START", default_value_t = 1)]
    pub seed_start: u64,
    /// Extra grid row `alphas=a,b;ns=n,m`. Repeatable; replaces --alphas/--ns.
    #[arg(long = "row")]
    pub rows: Vec<String>,
    #[arg(long, env = "BRUSH_GRID_OUT")]
    pub grid_out: PathBuf,
    #[arg(long, env = "BRUSH_CSV_OUT")]
    pub csv_out: PathBuf,
    #[arg(long, env = "BRUSH_WORKERS")]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub backend: BackendArg,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Behavior {
    Identity,
    Gmm,
    Fault,
    WrongShape,
    NonFinite,
}

#[derive(Args, Debug)]
pub struct MockArgs {
    #[arg(long, env = "BRUSH_MOCK_BEHAVIOR", value_enum, default_value = "gmm")]
    pub behavior: Behavior,
    /// Mixture served by `gmm`, and by `fault` for the requests it answers.
    #[arg(long, env = "BRUSH_GMM")]
    pub gmm: Option<PathBuf>,
    #[arg(long, env = "BRUSH_BIND", default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, env = "BRUSH_PORT", default_value_t = 7860)]
    pub port: u16,
    #[arg(long, env = "BRUSH_ERROR_RATE", default_value_t = 0.0)]
    pub error_rate: f64,
    #[arg(long, env = "BRUSH_LATENCY_MS", default_value_t = 0)]
    pub latency_ms: u64,
    #[arg(long, env = "BRUSH_FAULT_SEED", default_value_t = 0)]
    pub fault_seed: u64,
}

#[derive(Args, Debug)]
pub struct InitGmmArgs {
    #[arg(long, env = "BRUSH_OUT")]
    pub out: PathBuf,
    /// Latent shape `c,h,w`.
    #[arg(long, env = "BRUSH_SHAPE", default_value = "3,16,16")]
    pub shape: String,
    #[arg(long, env = "BRUSH_COMPONENTS", default_value_t = 4)]
    pub components: usize,
    #[arg(long, env = "BRUSH_VARIANCE", default_value_t = 0.01)]
    pub variance: f64,
}

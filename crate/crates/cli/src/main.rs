//! `dbc`: debiased compression of sample files.

mod commands;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::CliError;

#[derive(Parser)]
#[command(name = "dbc", version, about = "Debiased distribution compression with Stein kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a sample into a weighted coreset.
    Compress(CompressArgs),
    /// Score an existing coreset.
    Metrics(MetricsArgs),
    /// Write a synthetic sample and its target scores.
    Simulate(SimulateArgs),
    /// Kernel diagnostics and the pivoted Cholesky residual curve.
    Diag(DiagArgs),
}

#[derive(Args, Clone)]
pub struct KernelArgs {
    /// Base kernel family.
    #[arg(long, value_enum, default_value_t = Family::Imq)]
    pub kernel: Family,
    /// Bandwidth σ, or `median` for the median heuristic.
    #[arg(long, default_value = "median")]
    pub sigma: String,
    /// `identity`, a matrix file holding M, or `neg-hessian:<file>` holding
    /// the Hessian H of log p at the mode (M = −H).
    #[arg(long, default_value = "identity")]
    pub precond: String,
}

#[derive(Args, Clone)]
pub struct InputArgs {
    /// n×d sample points (DBCM binary or CSV).
    #[arg(long)]
    pub points: PathBuf,
    /// n×d scores ∇log p at the points.
    #[arg(long)]
    pub scores: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Imq,
    Gaussian,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    St,
    Skt,
    Lskt,
    Sr,
    Lsr,
    Sc,
    Lsc,
}

#[derive(Args)]
pub struct CompressArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Output size (LSKT always returns √n′ points and uses m only as the
    /// default rank).
    #[arg(long)]
    pub m: usize,
    /// Low-rank debiasing rank r (default m).
    #[arg(long)]
    pub rank: Option<usize>,
    /// Mirror descent steps T per round (default ⌈7√n₀⌉).
    #[arg(long)]
    pub amd_steps: Option<usize>,
    /// Debiasing rounds Q.
    #[arg(long, default_value_t = dbc_core::pipelines::DEFAULT_ROUNDS)]
    pub rounds: usize,
    /// KT-Compress++ oversampling g.
    #[arg(long, default_value_t = dbc_core::pipelines::DEFAULT_OVERSAMPLING)]
    pub oversample: u32,
    /// Kernel thinning failure probability δ.
    #[arg(long, default_value_t = dbc_core::pipelines::DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard-thin the input to n₀ points first.
    #[arg(long)]
    pub n0: Option<usize>,
    /// Coreset file (`index,weight` lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the JSON diagnostics here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Coreset file (`index,weight` lines).
    #[arg(long)]
    pub coreset: PathBuf,
    /// Reference points for the energy distance.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Binary,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// iid-target, iid-offtarget(shift), mala-burnin(start,step) or
    /// tempered(tau).
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes `<out>.points.<ext>` and `<out>.scores.<ext>`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args)]
pub struct DiagArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Largest rank on the residual curve (default min(n, 64)).
    #[arg(long)]
    pub max_rank: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compress(a) => commands::compress(&a),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Diag(a) => commands::diag(&a),
    };
    match result {
        Ok(json) => {
            let text = serde_json::to_string_pretty(&json).expect("JSON values always serialize");
            // A closed stdout (e.g. piped into `head`) is not an error.
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(CliError { code, message }) => {
            eprintln!("dbc: {message}");
            ExitCode::from(code)
        }
    }
}

mod backend;
mod commands;
mod config;
mod error;
mod manifest;
mod selfcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::{Table, Value};

use vidsolve_core::ops::Task;
use vidsolve_core::schedule::ScheduleKind;

/// Latent-diffusion solver for spatio-temporal video inverse problems.
///
/// Exit codes: 0 success, 1 other failure (including failed self-checks),
/// 2 configuration or usage error, 3 I/O error, 4 remote transport failure.
#[derive(Debug, Parser)]
#[command(name = "vidsolve", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply one of the six benchmark degradations to a clean video.
    Degrade(DegradeArgs),
    /// Restore a measurement whose operator is recorded in a manifest.
    Reconstruct(ReconstructArgs),
    /// Blind deblurring: estimate the Gaussian PSF width and reconstruct in two rounds.
    Blind(BlindArgs),
    /// Run the numerical self-checks and print a pass/fail table.
    Selfcheck,
}

#[derive(Debug, Args)]
struct DegradeArgs {
    /// Clean video: a directory of PNG frames or a .vtf file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// deblur, sr, inpaint, deblur+, sr+ or inpaint+.
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// Mask seed.
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file; only its [task] section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replay a previous degrade run; flags override its values.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    /// Measurement (.vtf or PNG directory); defaults to the manifest's measurement.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Manifest written by `degrade` (or a previous `reconstruct`).
    #[arg(long)]
    manifest: PathBuf,
    /// Ground truth for metrics.json.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Debug, Args)]
struct BlindArgs {
    /// Blurred video (.vtf or PNG directory).
    #[arg(long)]
    input: PathBuf,
    /// Pre-restorer for the first PSF estimate: identity or oracle:PATH.
    #[arg(long, default_value = "identity")]
    pre: String,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
}

/// Solver settings; each flag overrides the config file.
#[derive(Debug, Default, Args)]
struct SolverFlags {
    /// TOML file with [solver], [task] and [remote] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// zero, gaussian, remote or remote:HOST:PORT.
    #[arg(long)]
    denoiser: Option<String>,
    /// identity, haar or remote.
    #[arg(long)]
    codec: Option<String>,
    /// Diffusion steps T.
    #[arg(long)]
    steps: Option<u64>,
    /// Inversion depth as a fraction of T.
    #[arg(long)]
    tau_frac: Option<f64>,
    /// Low-pass filter strength; 0 disables it.
    #[arg(long)]
    lambda: Option<f64>,
    /// CG iterations per step.
    #[arg(long)]
    cg_steps: Option<u64>,
    /// Shared-noise weight in [0, 1].
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// scaled_linear, linear or cosine.
    #[arg(long, value_parser = parse_schedule)]
    schedule: Option<ScheduleKind>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    workers: Option<u64>,
}

impl SolverFlags {
    fn as_table(&self) -> Table {
        let mut t = Table::new();
        let mut put = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                t.insert(key.to_string(), v);
            }
        };
        put("denoiser", self.denoiser.clone().map(Value::String));
        put("codec", self.codec.clone().map(Value::String));
        put("steps", self.steps.map(|v| Value::Integer(v as i64)));
        put("tau_frac", self.tau_frac.map(Value::Float));
        put("lambda_lpf", self.lambda.map(Value::Float));
        put("cg_steps", self.cg_steps.map(|v| Value::Integer(v as i64)));
        put("eta", self.eta.map(Value::Float));
        put("seed", self.seed.map(|v| Value::Integer(v as i64)));
        put(
            "schedule",
            self.schedule.and_then(|k| Value::try_from(k).ok()),
        );
        put("workers", self.workers.map(|v| Value::Integer(v as i64)));
        t
    }
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: vidsolve_core::Error| e.to_string())
}

fn parse_schedule(s: &str) -> Result<ScheduleKind, String> {
    Value::String(s.to_string())
        .try_into()
        .map_err(|_| format!("unknown schedule {s:?}, expected scaled_linear, linear or cosine"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Degrade(a) => commands::degrade(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Blind(a) => commands::blind(a),
        Command::Selfcheck => selfcheck::run(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

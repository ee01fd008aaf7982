//! Batch driver: `manakov <command> [options] [input]`.
//!
//! Exit status: 0 success, 2 input error, 3 numerical failure,
//! 4 case-assumption violation.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use manakov_scatter::cli_io::{self, CaseChoice, RunConfig};
use manakov_scatter::evolution_oracle::FlowTag;
use manakov_scatter::{Epsilon, Error, Result};

#[derive(Parser)]
#[command(name = "manakov", version, about = "Direct and inverse scattering for the Manakov system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Command {
    /// Potential file -> scattering file, with case classification.
    Direct { input: Option<PathBuf> },
    /// Scattering file -> reconstructed potential file.
    Inverse { input: PathBuf },
    /// Direct then inverse; exits 0 iff the relative L2 error is below --max-error.
    Roundtrip { input: Option<PathBuf> },
    /// Apply the time flow to a scattering file.
    Evolve { input: PathBuf },
    /// Discrete eigenvalues and norming constants.
    Spectrum { input: Option<PathBuf> },
    /// Conservation, symmetry, Sobolev and contour diagnostics.
    Diagnose { input: Option<PathBuf> },
}

/// Commands taking an optional potential file generate a seeded random
/// potential on the configured x-grid when it is omitted.
#[derive(Args)]
struct Opts {
    #[arg(long, global = true, default_value_t = -20.0, allow_negative_numbers = true)]
    xmin: f64,
    #[arg(long, global = true, default_value_t = 20.0, allow_negative_numbers = true)]
    xmax: f64,
    #[arg(long, global = true, default_value_t = 2048)]
    nx: usize,
    #[arg(long = "lambda-max", global = true, default_value_t = 30.0)]
    lambda_max: f64,
    #[arg(long, global = true, default_value_t = 2048)]
    nlambda: usize,
    /// +1 focusing, -1 defocusing.
    #[arg(long, global = true, allow_hyphen_values = true)]
    epsilon: Option<String>,
    /// auto, I, II or III.
    #[arg(long, global = true, default_value = "auto")]
    case: String,
    #[arg(long = "tol-zero", global = true, default_value_t = 1e-6)]
    tol_zero: f64,
    #[arg(long = "tol-residual", global = true, default_value_t = 1e-10)]
    tol_residual: f64,
    #[arg(long = "tol-matching", global = true, default_value_t = 1e-6)]
    tol_matching: f64,
    /// manakov or sasa-satsuma.
    #[arg(long, global = true, default_value = "manakov")]
    flow: String,
    #[arg(long, global = true, default_value_t = 0.0, allow_negative_numbers = true)]
    t: f64,
    /// Phase constant; defaults to the calibrated value for the flow.
    #[arg(long, global = true, allow_negative_numbers = true)]
    kappa: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-error", global = true, default_value_t = 1e-3)]
    max_error: f64,
}

impl Opts {
    fn config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            x_min: self.xmin,
            x_max: self.xmax,
            nx: self.nx,
            lambda_max: self.lambda_max,
            n_lambda: self.nlambda,
            epsilon: self.epsilon.as_deref().map(Epsilon::parse).transpose()?,
            case: self.case.parse::<CaseChoice>()?,
            tol_zero: self.tol_zero,
            tol_residual: self.tol_residual,
            tol_matching: self.tol_matching,
            flow: self.flow.parse::<FlowTag>()?,
            t: self.t,
            kappa: self.kappa,
            out: self.out.clone(),
            seed: self.seed,
            max_error: self.max_error,
        })
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MANAKOV_THREADS") {
        let n: usize = v.parse().map_err(|_| Error::input(format!("MANAKOV_THREADS={v} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::input(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    init_threads()?;
    let cfg = cli.opts.config()?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let outcome = match &cli.command {
        Command::Direct { input } => cli_io::cmd_direct(input.as_deref(), &cfg, &mut out),
        Command::Inverse { input } => cli_io::cmd_inverse(input, &cfg, &mut out),
        Command::Roundtrip { input } => cli_io::cmd_roundtrip(input.as_deref(), &cfg, &mut out),
        Command::Evolve { input } => cli_io::cmd_evolve(input, &cfg, &mut out),
        Command::Spectrum { input } => cli_io::cmd_spectrum(input.as_deref(), &cfg, &mut out),
        Command::Diagnose { input } => cli_io::cmd_diagnose(input.as_deref(), &cfg, &mut out),
    }?;
    out.flush()?;
    Ok(outcome.status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("manakov: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

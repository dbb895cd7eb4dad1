//! `strip-spectra`: eigenvalues, scattering phase, expansion checks and
//! localization features of long strip domains with a curved cap.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

pub const JOBS_ENV: &str = "STRIP_SPECTRA_JOBS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Numerical(#[from] strip_spectra::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "strip-spectra", version, about = "Spectral asymptotics of long strips with a curved cap")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lowest eigenvalues on a refinement ladder, per N.
    Eigs(Common),
    /// Scattering phase a and constant b.
    Phase(Common),
    /// Checks the large-N expansion against computed eigenvalues.
    Verify(Common),
    /// Maximum and nodal-line localization.
    Features(Common),
    /// Writes the meshes in a plain-text format.
    MeshDump(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory, overriding `out_dir` of the config.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads (overridden by STRIP_SPECTRA_JOBS).
    #[arg(long, short)]
    jobs: Option<usize>,
}

fn resolve_jobs(flag: Option<usize>) -> Result<usize, CliError> {
    let jobs = match std::env::var(JOBS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("{JOBS_ENV} = {v:?} is not a positive integer")))?,
        Err(_) => flag.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
    };
    if jobs == 0 {
        return Err(CliError::Config("jobs must be at least 1".into()));
    }
    Ok(jobs)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let (name, common) = match &cli.command {
        Command::Eigs(c) => ("eigs", c),
        Command::Phase(c) => ("phase", c),
        Command::Verify(c) => ("verify", c),
        Command::Features(c) => ("features", c),
        Command::MeshDump(c) => ("mesh-dump", c),
    };
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate(name)?;
    let jobs = resolve_jobs(common.jobs)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    eprintln!("strip-spectra {name}: {} jobs, output in {}", jobs, cfg.out_dir.display());
    pool.install(|| match cli.command {
        Command::Eigs(_) => commands::eigs(&cfg).map(|_| true),
        Command::Phase(_) => commands::phase(&cfg).map(|_| true),
        Command::Verify(_) => commands::verify(&cfg),
        Command::Features(_) => commands::features(&cfg).map(|_| true),
        Command::MeshDump(_) => commands::mesh_dump(&cfg).map(|_| true),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

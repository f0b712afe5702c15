//! `carnot`: config-driven experiments on homogeneous groups.
//!
//! Exit codes: 0 success, 2 invariant failure, 3 configuration error.

mod commands;
mod config;
mod error;
mod report;

use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::report::RunReport;

#[derive(Parser)]
#[command(name = "carnot", version, about = "Spherical factors and area formulas in homogeneous groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// CSV output path; without it the CSV follows the summary on stdout.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Overrides the config sample count.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Progress details on stderr.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Structure constants and sampled group-law identities.
    CheckGroup,
    /// Sampled distance axioms.
    CheckDistance,
    /// Spherical factor of one subspace.
    Beta,
    /// Spherical factors over random subspaces of one signature.
    Sweep,
    /// Density blow-up at a surface point.
    Blowup,
    /// Area of a level set as an intrinsic graph.
    GraphArea,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::CheckGroup => "check-group",
            Command::CheckDistance => "check-distance",
            Command::Beta => "beta",
            Command::Sweep => "sweep",
            Command::Blowup => "blowup",
            Command::GraphArea => "graph-area",
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CARNOT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("CARNOT_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<RunReport, CliError> {
    init_threads()?;
    let path = cli.config.as_deref().ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Config(format!("{path} is not UTF-8")))?;
    let mut cfg = config::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.samples {
        cfg.samples = Some(n);
    }
    if cli.out.is_some() {
        cfg.out.clone_from(&cli.out);
    }
    let digest = format!("{:x}", Sha256::digest(&bytes));
    let mut report = RunReport::new(cli.command.name(), digest, cfg.seed);
    let start = Instant::now();
    let run = match cli.command {
        Command::CheckGroup => commands::check_group,
        Command::CheckDistance => commands::check_distance,
        Command::Beta => commands::beta,
        Command::Sweep => commands::sweep,
        Command::Blowup => commands::blowup,
        Command::GraphArea => commands::graph_area,
    };
    run(&cfg, &mut report, cli.verbose)?;
    report.wall_time = start.elapsed().as_secs_f64();
    report.emit(cfg.out.as_deref())?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(report) if report.passed() => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `strongdamp` command-line driver.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::manifest::Manifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<strongdamp::Error> for CliError {
    fn from(e: strongdamp::Error) -> Self {
        use strongdamp::Error::*;
        match e {
            Parse(_) | Problem(_) | Precondition(_) | GridMismatch(_) | Json(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numerical(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Numerical(format!("json: {e}"))
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Subcommand, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Check the standing hypotheses on a problem by sampling
    Validate,
    /// Simulate inertial or first-order trajectories
    Simulate,
    /// Evaluate the action of a path or of a control's skeleton
    Action,
    /// Minimum-action quasi-potential, to a point or over the boundary
    Quasipotential,
    /// Exit-time Monte Carlo along an eps ladder
    Exit,
    /// Riemannian distance, fronts and path-optimized R, R~
    Front,
    /// H scaling, controlled convergence and Laplace checks
    Verify,
    /// The full acceptance suite
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Action => "action",
            Command::Quasipotential => "quasipotential",
            Command::Exit => "exit",
            Command::Front => "front",
            Command::Verify => "verify",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "strongdamp",
    version,
    about = "Large deviations for the strongly damped Langevin equation"
)]
#[command(subcommand_required = false, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// run configuration (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// overrides the configuration seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads, machine parallelism by default
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// output directory; falls back to STRONGDAMP_OUT, then the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// also write tidy long-format CSV for plotting
    #[arg(long, global = true)]
    emit_plot_data: bool,
    /// rerun the command recorded in a manifest
    #[arg(long, global = true)]
    replay: Option<PathBuf>,
}

/// Everything a command needs, after flags and config are merged.
pub struct Context {
    pub command: Command,
    pub config: RunConfig,
    pub base: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
    pub emit_plot_data: bool,
}

/// Outcome of a command that ran to completion.
pub struct Completed {
    pub passed: bool,
    pub artifacts: Vec<PathBuf>,
}

fn resolve(cli: &Cli) -> Result<(Context, Option<usize>), CliError> {
    let (command, config, base, manifest_out) = match &cli.replay {
        Some(path) => {
            let m = Manifest::load(path)?;
            if let Some(c) = cli.command {
                if c != m.command {
                    return Err(CliError::Config(format!(
                        "manifest records `{}`, not `{}`",
                        m.command.name(),
                        c.name()
                    )));
                }
            }
            (
                m.command,
                m.config,
                PathBuf::from(m.config_base),
                Some(PathBuf::from(m.output)),
            )
        }
        None => {
            let command = cli
                .command
                .ok_or_else(|| CliError::Config("no subcommand given".into()))?;
            let config = match &cli.config {
                Some(p) => RunConfig::load(p)?,
                None if command == Command::All => RunConfig::default(),
                None => return Err(CliError::Config("--config is required".into())),
            };
            let base = config::config_base(cli.config.as_deref());
            let base = std::fs::canonicalize(&base).unwrap_or(base);
            (command, config, base, None)
        }
    };
    let seed = cli
        .seed
        .or(config.seed)
        .ok_or_else(|| CliError::Config("no seed: pass --seed or set `seed` in the config".into()))?;
    let out = cli
        .out
        .clone()
        .or(manifest_out)
        .or_else(|| std::env::var_os("STRONGDAMP_OUT").map(PathBuf::from))
        .or_else(|| config.output.as_ref().map(|o| base.join(o)))
        .ok_or_else(|| CliError::Config("no output directory: pass --out, set STRONGDAMP_OUT or `output`".into()))?;
    let mut config = config;
    config.seed = Some(seed);
    Ok((
        Context {
            command,
            config,
            base,
            seed,
            out,
            emit_plot_data: cli.emit_plot_data,
        },
        cli.threads,
    ))
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let (ctx, threads) = resolve(cli)?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // a second initialization only happens in tests; keep the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    std::fs::create_dir_all(&ctx.out)?;
    let start = Instant::now();
    let done = commands::dispatch(&ctx)?;
    let code = if done.passed { 0 } else { 4 };
    let manifest = Manifest::new(
        &ctx,
        rayon::current_num_threads(),
        start.elapsed().as_secs_f64(),
        &done.artifacts,
        code,
    )?;
    manifest.write(&ctx.out.join("manifest.json"))?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("strongdamp: {e}");
            ExitCode::from(e.code())
        }
    }
}

/// Path of `p` relative to `root` when below it.
pub fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).display().to_string()
}

//! `wsdiag`: generate fields, run the conservation diagnostics and the
//! viscosity sweep, and persist every result with a manifest.
//!
//! Exit codes: 0 positive verdict, 2 negative verdict, 3 violated hypothesis
//! or rejected input, 1 internal error.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "wsdiag", version, about = "Energy-conservation diagnostics for weak fluid solutions")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the WSDIAG_OUT variable and the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic field.
    Gen(commands::gen::GenArgs),
    /// Scaling probes, weak energy identity and defect sizes.
    Diagnose(commands::diagnose::DiagnoseArgs),
    /// Boundary shell ladder, global balance, verdict and modulus check.
    Boundary(commands::boundary::BoundaryArgs),
    /// Navier-Stokes runs along a viscosity ladder.
    Sweep(commands::sweep::SweepArgs),
    /// Check output directories and print their verdicts.
    Report(commands::report::ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Diagnose(_) => "diagnose",
            Command::Boundary(_) => "boundary",
            Command::Sweep(_) => "sweep",
            Command::Report(_) => "report",
        }
    }
}

/// A list flag parsed from a single value.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

fn split<T: std::str::FromStr>(s: &str, sep: char) -> std::result::Result<List<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(sep)
        .map(|t| t.trim().parse::<T>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<std::result::Result<Vec<T>, String>>()
        .map(List)
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(s: &str) -> std::result::Result<List<f64>, String> {
    split(s, ',')
}

/// Parses `NxM` or `NxMxK`.
pub fn parse_dims(s: &str) -> std::result::Result<List<usize>, String> {
    split(s, 'x')
}

/// Parses `AxB` extents.
pub fn parse_extent(s: &str) -> std::result::Result<List<f64>, String> {
    split(s, 'x')
}

/// Loads the config file (if any) and applies the global flags.
fn base_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = Some(s);
    }
    if let Some(t) = g.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        cfg.threads = Some(t);
    }
    Ok(cfg)
}

/// Output directory: `--out`, then the environment, then the config, then the default.
/// Only the config value is echoed, so results do not depend on where they are written.
fn output_root(g: &GlobalArgs, cfg: &RunConfig) -> PathBuf {
    g.out
        .clone()
        .or_else(|| std::env::var_os(output::OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(commands::DEFAULT_OUT))
}

pub fn execute(cli: Cli) -> Result<i32> {
    let cfg = base_config(&cli.global)?;
    let root = output_root(&cli.global, &cfg);
    let threads = cfg.threads;
    let go = move || match cli.command {
        Command::Gen(a) => commands::gen::run(cfg, &root, a),
        Command::Diagnose(a) => commands::diagnose::run(cfg, &root, a),
        Command::Boundary(a) => commands::boundary::run(cfg, &root, a),
        Command::Sweep(a) => commands::sweep::run(cfg, &root, a),
        Command::Report(a) => commands::report::run(a),
    };
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(go),
        None => go(),
    }
}

/// Runs the tool on `args` (program name first) and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

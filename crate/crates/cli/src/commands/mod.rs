pub mod boundary;
pub mod diagnose;
pub mod gen;
pub mod report;
pub mod sweep;

use std::path::{Path, PathBuf};

use serde::Serialize;

use wsdiag_core::fieldio::load_trajectory;
use wsdiag_core::pressure::solve_pressure;
use wsdiag_core::Trajectory;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{Outcome, OutputDir, SUMMARY};

pub const DEFAULT_OUT: &str = "wsdiag-out";

pub(crate) fn open_output(root: &Path) -> Result<OutputDir> {
    OutputDir::create(root)
}

/// Loads velocity files in order; a single file becomes a one-snapshot trajectory.
pub(crate) fn load_inputs(files: &[PathBuf]) -> Result<Trajectory> {
    if files.is_empty() {
        return Err(CliError::Usage("no field files given".into()));
    }
    if let Some(p) = files.iter().find(|p| !p.is_file()) {
        return Err(CliError::Usage(format!("{}: no such field file", p.display())));
    }
    Ok(load_trajectory(files)?)
}

/// Fills in missing pressures; returns how many were solved.
pub(crate) fn ensure_pressure(traj: &mut Trajectory) -> Result<usize> {
    let mut solved = 0;
    for s in traj.snapshots.iter_mut() {
        if s.pressure.is_none() {
            let r = solve_pressure(s)?;
            s.pressure = Some(r.pressure);
            solved += 1;
        }
    }
    Ok(solved)
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    #[serde(flatten)]
    outcome: &'a Outcome,
    details: &'a T,
}

/// Writes `summary.json`, the config echo and the manifest, prints the verdict line.
pub(crate) fn finish<T: Serialize>(
    mut out: OutputDir,
    cfg: &RunConfig,
    seeds: &[u64],
    outcome: Outcome,
    details: &T,
) -> Result<i32> {
    out.write_json(
        SUMMARY,
        &Summary {
            outcome: &outcome,
            details,
        },
    )?;
    let root = out.finish(&outcome.command, cfg, seeds)?;
    println!("{}: {} [{}]", outcome.command, outcome.verdict, display(&root));
    Ok(outcome.exit_code)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

pub(crate) fn exit_for(positive: bool) -> i32 {
    if positive {
        0
    } else {
        2
    }
}

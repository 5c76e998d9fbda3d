use std::path::Path;

use clap::{Args, ValueEnum};
use serde::Serialize;

use wsdiag_core::fieldio::save_snapshot;
use wsdiag_core::pressure::solve_pressure;
use wsdiag_core::synth::GeneratorSpec;

use crate::config::{GenConfig, GridSpec, RunConfig};
use crate::error::{CliError, Result};
use crate::output::Outcome;
use crate::{parse_dims, parse_extent, List};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Fractional,
    /// Viscous Taylor-Green at time `--t` (steady when `--nu` is 0).
    TaylorGreen,
    ChannelFlow,
}

#[derive(Debug, Default, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Spectral cutoff of fractional fields.
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub poiseuille: Option<f64>,
    #[arg(long)]
    pub vortex: Option<f64>,
    #[arg(long)]
    pub mode: Option<u32>,
    /// Node counts, e.g. `256x256`.
    #[arg(long, value_parser = parse_dims)]
    pub grid: Option<List<usize>>,
    /// Physical extents, e.g. `6.283185307179586x1`.
    #[arg(long, value_parser = parse_extent)]
    pub extent: Option<List<f64>>,
    /// Walls across this axis.
    #[arg(long)]
    pub wall_axis: Option<usize>,
    /// File stem.
    #[arg(long)]
    pub name: Option<String>,
    /// Recover the pressure when the generator has none.
    #[arg(long)]
    pub pressure: bool,
}

fn spec_from_flags(kind: Kind, a: &GenArgs, seed: Option<u64>) -> Result<GeneratorSpec> {
    Ok(match kind {
        Kind::Fractional => GeneratorSpec::Fractional {
            alpha: a.alpha.ok_or_else(|| CliError::Usage("--alpha is required for fractional fields".into()))?,
            cutoff: a.cutoff,
            seed: seed.unwrap_or(0),
        },
        Kind::TaylorGreen => GeneratorSpec::TaylorGreenViscous {
            nu: a.nu.unwrap_or(0.0),
            t: a.t.unwrap_or(0.0),
        },
        Kind::ChannelFlow => GeneratorSpec::ChannelFlow {
            poiseuille: a.poiseuille.unwrap_or(0.0),
            vortex: a.vortex.unwrap_or(0.0),
            mode: a.mode.unwrap_or(1),
        },
    })
}

/// Applies the numeric flags to a generator taken from the config file.
fn patch(spec: &mut GeneratorSpec, a: &GenArgs, seed: Option<u64>) {
    match spec {
        GeneratorSpec::Fractional {
            alpha,
            cutoff,
            seed: s,
        } => {
            if let Some(v) = a.alpha {
                *alpha = v;
            }
            if a.cutoff.is_some() {
                *cutoff = a.cutoff;
            }
            if let Some(v) = seed {
                *s = v;
            }
        }
        GeneratorSpec::TaylorGreenViscous { nu, t } => {
            if let Some(v) = a.nu {
                *nu = v;
            }
            if let Some(v) = a.t {
                *t = v;
            }
        }
        GeneratorSpec::ChannelFlow {
            poiseuille,
            vortex,
            mode,
        } => {
            if let Some(v) = a.poiseuille {
                *poiseuille = v;
            }
            if let Some(v) = a.vortex {
                *vortex = v;
            }
            if let Some(v) = a.mode {
                *mode = v;
            }
        }
        _ => {}
    }
}

/// Merges flags into the `gen` section of the config.
pub fn resolve(cfg: &RunConfig, a: &GenArgs) -> Result<GenConfig> {
    let mut gc = match (&cfg.gen, a.kind) {
        (_, Some(kind)) => {
            let mut gc = cfg.gen.clone().unwrap_or(GenConfig {
                grid: GridSpec::default(),
                generator: GeneratorSpec::TaylorGreenSteady,
                name: "field".into(),
                pressure: false,
            });
            gc.generator = spec_from_flags(kind, a, cfg.seed)?;
            if kind == Kind::ChannelFlow && a.wall_axis.is_none() && cfg.gen.is_none() {
                gc.grid.wall_axis = Some(1);
            }
            gc
        }
        (Some(gc), None) => {
            let mut gc = gc.clone();
            patch(&mut gc.generator, a, cfg.seed);
            gc
        }
        (None, None) => {
            return Err(CliError::Usage(
                "no generator: pass --kind or a config with a `gen` section".into(),
            ))
        }
    };
    if let Some(List(d)) = &a.grid {
        gc.grid.dims = d.clone();
    }
    if let Some(List(e)) = &a.extent {
        gc.grid.extent = Some(e.clone());
    }
    if a.wall_axis.is_some() {
        gc.grid.wall_axis = a.wall_axis;
    }
    if let Some(n) = &a.name {
        gc.name = n.clone();
    }
    if a.pressure {
        gc.pressure = true;
    }
    if gc.name.is_empty() || gc.name.contains(['/', '\\']) {
        return Err(CliError::Config(format!("gen.name `{}` is not a plain file stem", gc.name)));
    }
    Ok(gc)
}

#[derive(Serialize)]
struct GenDetails {
    velocity_file: String,
    pressure_file: Option<String>,
    pressure_solved: bool,
    dims: Vec<usize>,
    time: f64,
    pressure_residual: Option<f64>,
}

pub fn run(mut cfg: RunConfig, root: &Path, a: GenArgs) -> Result<i32> {
    let gc = resolve(&cfg, &a)?;
    cfg.gen = Some(gc.clone());
    let grid = gc.grid.build()?;
    let mut snap = gc.generator.generate(&grid)?;
    let mut solved = false;
    let mut residual = None;
    if gc.pressure && snap.pressure.is_none() {
        let r = solve_pressure(&snap)?;
        residual = Some(r.residual);
        snap.pressure = Some(r.pressure);
        solved = true;
    }
    let mut out = super::open_output(root)?;
    let vpath = save_snapshot(out.path(), &gc.name, &snap)?;
    out.register_field(&vpath)?;
    let seeds: Vec<u64> = snap.tags.seed.into_iter().collect();
    let details = GenDetails {
        velocity_file: format!("{}.vel.oflx", gc.name),
        pressure_file: snap.pressure.as_ref().map(|_| format!("{}.p.oflx", gc.name)),
        pressure_solved: solved,
        dims: grid.dims().to_vec(),
        time: snap.time,
        pressure_residual: residual,
    };
    let outcome = Outcome {
        command: "gen".into(),
        verdict: format!("wrote {}", details.velocity_file),
        positive: true,
        exit_code: 0,
    };
    super::finish(out, &cfg, &seeds, outcome, &details)
}

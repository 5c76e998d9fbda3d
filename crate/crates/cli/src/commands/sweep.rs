use std::path::Path;

use clap::Args;
use serde::Serialize;

use wsdiag_core::boundary_flux::ShellSpec;
use wsdiag_core::fieldio::save_trajectory;
use wsdiag_core::ns_solver::{sweep_with_runs, viscous_flux_criterion, DissipationSweep, SolverGeometry, ViscousFluxReport};
use wsdiag_core::Domain;

use crate::config::{default_base, RunConfig, SweepConfig};
use crate::error::{CliError, Result};
use crate::output::{num, opt_num, Outcome};
use crate::{parse_dims, parse_list, List};

#[derive(Debug, Default, Args)]
pub struct SweepArgs {
    /// Decreasing viscosities, comma separated.
    #[arg(long, value_parser = parse_list)]
    pub nus: Option<List<f64>>,
    #[arg(long)]
    pub t_star: Option<f64>,
    /// Cells per axis, e.g. `128x128`.
    #[arg(long, value_parser = parse_dims)]
    pub cells: Option<List<usize>>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Shell widths of the viscous flux criterion, comma separated.
    #[arg(long, value_parser = parse_list)]
    pub etas: Option<List<f64>>,
    /// Keep every run's trajectory as field files.
    #[arg(long)]
    pub save_trajectories: bool,
}

fn resolve(cfg: &RunConfig, a: &SweepArgs) -> Result<SweepConfig> {
    let mut sc = match (&cfg.sweep, &a.nus, a.t_star) {
        (Some(sc), _, _) => sc.clone(),
        (None, Some(nus), Some(t_star)) => SweepConfig {
            base: default_base(),
            nus: nus.0.clone(),
            t_star,
            etas: None,
            save_trajectories: false,
        },
        _ => {
            return Err(CliError::Usage(
                "sweep needs --nus and --t-star, or a config with a `sweep` section".into(),
            ))
        }
    };
    if let Some(n) = &a.nus {
        sc.nus = n.0.clone();
    }
    if let Some(t) = a.t_star {
        sc.t_star = t;
    }
    if let Some(List(c)) = &a.cells {
        if c.len() != 2 {
            return Err(CliError::Usage(format!("--cells needs two counts, got {}", c.len())));
        }
        sc.base.cells = [c[0], c[1]];
    }
    if let Some(dt) = a.dt {
        sc.base.dt = dt;
    }
    if a.etas.is_some() {
        sc.etas = a.etas.clone().map(|l| l.0);
    }
    if a.save_trajectories {
        sc.save_trajectories = true;
    }
    Ok(sc)
}

#[derive(Serialize)]
struct SweepDetails {
    sweep: DissipationSweep,
    max_leray_residual: f64,
    leray_tolerance: f64,
    flux: Option<ViscousFluxReport>,
}

pub fn run(mut cfg: RunConfig, root: &Path, a: SweepArgs) -> Result<i32> {
    let sc = resolve(&cfg, &a)?;
    cfg.sweep = Some(sc.clone());
    let etas = if sc.base.geometry == SolverGeometry::Channel && sc.nus.len() >= 2 {
        let domain = Domain::new(sc.base.node_grid()?)?;
        let etas = match &sc.etas {
            Some(e) => e.clone(),
            None => super::boundary::default_etas(&domain)?,
        };
        for &eta in &etas {
            ShellSpec::with_default_ceiling(&domain, eta)?;
        }
        Some(etas)
    } else {
        None
    };
    let (sweep, runs) = sweep_with_runs(&sc.base, &sc.nus, sc.t_star)?;

    let mut out = super::open_output(root)?;
    let rows: Vec<Vec<String>> = sweep
        .entries
        .iter()
        .map(|e| {
            vec![
                num(e.nu),
                num(e.dissipation),
                num(e.max_leray_residual),
                opt_num(e.layer_cells),
                e.under_resolved.to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "sweep.csv",
        &["nu", "dissipation", "max_leray_residual", "layer_cells", "under_resolved"],
        &rows,
    )?;
    for (k, r) in runs.iter().enumerate() {
        let s = &r.series;
        let rows: Vec<Vec<String>> = (0..s.times.len())
            .map(|i| {
                vec![
                    num(s.times[i]),
                    num(s.kinetic_energy[i]),
                    num(s.cumulative_dissipation[i]),
                    num(s.leray_residual[i]),
                ]
            })
            .collect();
        out.write_csv(
            &format!("series_{k:02}.csv"),
            &["t", "E", "cumulative_dissipation", "leray_residual"],
            &rows,
        )?;
        if sc.save_trajectories {
            let dir = out.path().join(format!("run_{k:02}"));
            for p in save_trajectory(&dir, &r.trajectory)? {
                out.register_field(&p)?;
            }
        }
    }

    let flux = if let Some(etas) = etas {
        let pairs: Vec<_> = sc.nus.iter().copied().zip(runs.iter().map(|r| r.trajectory.clone())).collect();
        let rep = viscous_flux_criterion(&pairs, &etas, &cfg.tolerances.verdict)?;
        let mut rows = Vec::new();
        for (e, eta) in rep.etas.iter().enumerate() {
            for (k, nu) in rep.nus.iter().enumerate() {
                rows.push(vec![num(*eta), num(*nu), num(rep.flux[e][k])]);
            }
            rows.push(vec![num(*eta), num(0.0), num(rep.extrapolated[e])]);
        }
        out.write_csv("flux.csv", &["eta", "nu", "flux"], &rows)?;
        Some(rep)
    } else {
        None
    };

    let max_leray = sweep.entries.iter().map(|e| e.max_leray_residual).fold(f64::NEG_INFINITY, f64::max);
    let leray_ok = max_leray <= cfg.tolerances.leray_residual;
    let positive = sweep.passed && leray_ok && flux.as_ref().is_none_or(|f| f.passed);
    let mut verdict = sweep.verdict.clone();
    if let Some(f) = &flux {
        verdict.push_str("; ");
        verdict.push_str(&f.verdict);
    }
    if !leray_ok {
        verdict.push_str(&format!("; energy inequality violated by {max_leray:e}"));
    }
    let outcome = Outcome {
        command: "sweep".into(),
        verdict,
        positive,
        exit_code: super::exit_for(positive),
    };
    let details = SweepDetails {
        sweep,
        max_leray_residual: max_leray,
        leray_tolerance: cfg.tolerances.leray_residual,
        flux,
    };
    let seeds: Vec<u64> = match &sc.base.initial {
        wsdiag_core::synth::GeneratorSpec::Fractional { seed, .. } => vec![*seed],
        _ => vec![],
    };
    super::finish(out, &cfg, &seeds, outcome, &details)
}

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use wsdiag_core::boundary_flux::{conservation_verdict, modulus_check, ConservationVerdict, ModulusReport, ShellSpec, VerdictKind};
use wsdiag_core::{Domain, Error as CoreError};

use crate::config::{BoundaryConfig, RunConfig};
use crate::error::Result;
use crate::output::{num, Outcome};
use crate::{parse_list, List};

#[derive(Debug, Default, Args)]
pub struct BoundaryArgs {
    /// Velocity files in time order.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Decreasing shell widths, comma separated.
    #[arg(long, value_parser = parse_list)]
    pub etas: Option<List<f64>>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

/// Doubling ladder from the narrowest resolved shell, up to eight times wider.
/// Narrow shells keep the ladder in the near-wall regime where `u·n = O(d)`.
pub fn default_etas(domain: &Domain) -> Result<Vec<f64>> {
    let half = domain.half_width().ok_or(CoreError::NoBoundary)?;
    let wall = domain.wall_axis().ok_or(CoreError::NoBoundary)?;
    let h = domain.grid().spacing()[wall];
    let mut last_err = None;
    let mut base = None;
    let mut k = 8.0;
    while k * h < half {
        match ShellSpec::with_default_ceiling(domain, k * h) {
            Ok(_) => {
                base = Some(k * h);
                break;
            }
            Err(e) => last_err = Some(e),
        }
        k += 1.0;
    }
    let Some(base) = base else {
        return Err(last_err.unwrap_or(CoreError::NoBoundary).into());
    };
    let etas: Vec<f64> = [8.0, 4.0, 2.0, 1.0]
        .iter()
        .map(|m| m * base)
        .filter(|&e| ShellSpec::with_default_ceiling(domain, e).is_ok())
        .collect();
    if etas.len() < 3 {
        return Err(CoreError::TooFewRungs { got: etas.len(), need: 3 }.into());
    }
    Ok(etas)
}

#[derive(Serialize)]
struct BoundaryDetails {
    snapshots: usize,
    pressure_solved: usize,
    verdict: ConservationVerdict,
    modulus: ModulusReport,
}

pub fn run(mut cfg: RunConfig, root: &Path, a: BoundaryArgs) -> Result<i32> {
    let mut bc = cfg.boundary.clone().unwrap_or(BoundaryConfig::default());
    if a.etas.is_some() {
        bc.etas = a.etas.clone().map(|l| l.0);
    }
    if a.gamma.is_some() {
        bc.gamma = a.gamma;
    }
    cfg.boundary = Some(bc.clone());
    let mut traj = super::load_inputs(&a.files)?;
    let domain = Domain::new(traj.grid().clone())?;
    let half = domain.half_width().ok_or(CoreError::NoBoundary)?;
    let etas = match &bc.etas {
        Some(e) => e.clone(),
        None => default_etas(&domain)?,
    };
    let pressure_solved = super::ensure_pressure(&mut traj)?;
    let verdict = conservation_verdict(&traj, &domain, &etas, &cfg.tolerances.verdict)?;
    let gamma = bc.gamma.unwrap_or(0.25 * half);
    let modulus = modulus_check(&traj, &domain, gamma, cfg.tolerances.modulus_intercept)?;

    let mut out = super::open_output(root)?;
    let rows: Vec<Vec<String>> = verdict
        .rows
        .iter()
        .map(|r| {
            let b = &r.balance;
            vec![
                num(r.eta),
                r.planes.to_string(),
                num(r.flux),
                num(r.pressure_norm),
                num(b.t1),
                num(b.t2),
                num(b.e1),
                num(b.e2),
                num(b.boundary_term),
                num(b.residual),
                num(b.budget),
            ]
        })
        .collect();
    out.write_csv(
        "shells.csv",
        &["eta", "planes", "flux", "pressure_norm", "t1", "t2", "e1", "e2", "boundary_term", "residual", "budget"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = modulus.envelope.iter().map(|&(d, v)| vec![num(d), num(v)]).collect();
    out.write_csv("modulus.csv", &["distance", "max_normal_velocity"], &rows)?;

    let exit_code = match verdict.kind {
        VerdictKind::Conserved => 0,
        VerdictKind::NotConserved => 2,
        VerdictKind::HypothesesFail => 3,
    };
    let outcome = Outcome {
        command: "boundary".into(),
        verdict: verdict.verdict.clone(),
        positive: exit_code == 0,
        exit_code,
    };
    let seeds = vec![cfg.tolerances.verdict.holder.seed];
    let details = BoundaryDetails {
        snapshots: traj.len(),
        pressure_solved,
        verdict,
        modulus,
    };
    super::finish(out, &cfg, &seeds, outcome, &details)
}

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use wsdiag_core::commutator::{check_ladder, radial_bump, scaling_probe, ScalingProbe};
use wsdiag_core::energy_balance::{
    dr_convergence_sweep, dr_dissipation_field, flux_verdict, SweepReport, TestFunction, TimeWindow,
};
use wsdiag_core::mollify::nested_regions;
use wsdiag_core::synth::{estimate_holder_exponent, HolderOptions};
use wsdiag_core::{AxisKind, Domain, Error as CoreError, Grid, Region, Trajectory};

use crate::config::{DiagnoseConfig, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{num, Outcome};
use crate::{parse_list, List};

#[derive(Debug, Default, Args)]
pub struct DiagnoseArgs {
    /// Velocity files in time order.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Decreasing kernel radii, comma separated.
    #[arg(long = "eps", value_parser = parse_list)]
    pub epsilons: Option<List<f64>>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
}

/// Rungs of the default ladder, in grid spacings.
const DEFAULT_RUNGS: [f64; 5] = [16.0, 8.0 * std::f64::consts::SQRT_2, 8.0, 4.0 * std::f64::consts::SQRT_2, 4.0];

pub fn default_ladder(grid: &Grid) -> Vec<f64> {
    let h = grid.max_spacing();
    DEFAULT_RUNGS.iter().map(|r| r * h).collect()
}

fn resolve(cfg: &RunConfig, a: &DiagnoseArgs) -> DiagnoseConfig {
    let mut d = cfg.diagnose.clone().unwrap_or_default();
    if a.alpha.is_some() {
        d.alpha = a.alpha;
    }
    if a.epsilons.is_some() {
        d.epsilons = a.epsilons.clone().map(|l| l.0);
    }
    if a.eta.is_some() {
        d.eta = a.eta;
    }
    if let Some(k) = a.kappa {
        d.kappa = k;
    }
    if a.tau.is_some() {
        d.tau = a.tau;
    }
    if a.radius.is_some() {
        d.radius = a.radius;
    }
    d
}

fn ladder_hint(grid: &Grid) -> String {
    let l: Vec<String> = default_ladder(grid).iter().map(|e| format!("{e:.6}")).collect();
    format!(
        "admissible radii are >= {:.6} (two grid spacings), at least 4 strictly decreasing rungs; for example --eps {}",
        2.0 * grid.max_spacing(),
        l.join(",")
    )
}

#[derive(Serialize)]
struct AlphaSource {
    value: f64,
    estimated: bool,
    note: Option<String>,
}

#[derive(Serialize)]
struct DiagnoseDetails {
    snapshots: usize,
    epsilons: Vec<f64>,
    eta: f64,
    kappa: f64,
    center: Vec<f64>,
    radius: f64,
    alpha: AlphaSource,
    pressure_solved: usize,
    probe: ScalingProbe,
    identity: Option<SweepReport>,
    window: Option<TimeWindow>,
    defect_max: Option<Vec<f64>>,
}

pub fn run(mut cfg: RunConfig, root: &Path, a: DiagnoseArgs) -> Result<i32> {
    let dc = resolve(&cfg, &a);
    cfg.diagnose = Some(dc.clone());
    let mut traj = super::load_inputs(&a.files)?;
    let grid = traj.grid().clone();

    let epsilons = dc.epsilons.clone().unwrap_or_else(|| default_ladder(&grid));
    if let Err(e) = check_ladder(&grid, &epsilons) {
        return match e {
            CoreError::UnderResolved { .. } | CoreError::TooFewRungs { .. } | CoreError::InvalidParameter { .. } => {
                Err(CliError::Usage(format!("{e}\n{}", ladder_hint(&grid))))
            }
            other => Err(other.into()),
        };
    }
    let eta = dc.eta.unwrap_or(2.0 * epsilons[0]);
    let (center, radius) = test_placement(&grid, &dc, eta)?;
    let phi = radial_bump(&grid, &center, radius)?;
    let mut chain = nested_regions(&phi.footprint(&grid), eta, &grid, 3)?;
    if let Some(tau) = dc.tau {
        chain = chain.with_time_margin(tau)?;
    }
    let valid = (!grid.is_periodic()).then(|| chain.outermost().clone());

    let seed = cfg.seed.unwrap_or(HolderOptions::default().seed);
    let alpha = match dc.alpha {
        Some(v) => {
            if !(v > 0.0 && v <= 1.0) {
                return Err(CliError::Config(format!("diagnose.alpha must lie in (0, 1], got {v}")));
            }
            AlphaSource {
                value: v,
                estimated: false,
                note: None,
            }
        }
        None => {
            let opts = HolderOptions {
                seed,
                ..HolderOptions::default()
            };
            let region = valid.clone().unwrap_or_else(|| Region::full(&grid));
            let est = estimate_holder_exponent(&grid, &traj.snapshots[0].velocity, &region, &opts)?;
            match est.degenerate {
                Some(note) => AlphaSource {
                    value: 1.0,
                    estimated: true,
                    note: Some(note),
                },
                None => AlphaSource {
                    value: est.exponent.clamp(0.0, 1.0),
                    estimated: true,
                    note: None,
                },
            }
        }
    };

    let window = default_window(&traj, &dc);
    let chi: Vec<f64> = match &window {
        Some(w) => traj.snapshots.iter().map(|s| w.value(s.time)).collect(),
        None => vec![1.0; traj.len()],
    };
    let probe = if traj.len() == 1 {
        let single = Trajectory::new(traj.snapshots.clone(), 1.0)?;
        scaling_probe(&single, alpha.value, &epsilons, &chi, &phi, valid.as_ref())?
    } else {
        scaling_probe(&traj, alpha.value, &epsilons, &chi, &phi, valid.as_ref())?
    };

    let mut out = super::open_output(root)?;
    let rows: Vec<Vec<String>> = epsilons
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            vec![
                num(e),
                num(probe.flux.values[k]),
                num(probe.sup_stress.values[k]),
                num(probe.sup_grad.values[k]),
            ]
        })
        .collect();
    out.write_csv("probe.csv", &["epsilon", "flux", "sup_stress", "sup_grad"], &rows)?;

    let mut pressure_solved = 0;
    let mut identity = None;
    let mut defect_max = None;
    if let Some(w) = window {
        pressure_solved = super::ensure_pressure(&mut traj)?;
        let test = TestFunction::new(w, phi.clone());
        let sweep = dr_convergence_sweep(&traj, &epsilons, &test, dc.kappa, &chain, alpha.value)?;
        let rows: Vec<Vec<String>> = sweep
            .reports
            .iter()
            .map(|r| vec![num(r.epsilon), num(r.lhs), num(r.rhs), num(r.residual), num(r.budget)])
            .collect();
        out.write_csv("identity.csv", &["epsilon", "lhs", "rhs", "residual", "budget"], &rows)?;
        let dtest = test.clone().discrete();
        let defects = epsilons
            .iter()
            .map(|&e| {
                let d = dr_dissipation_field(&traj, e, &chain)?;
                Ok((d.max_abs(), d.integrate_against(&grid, &dtest, traj.dt)))
            })
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<String>> = epsilons
            .iter()
            .zip(&defects)
            .map(|(&e, d)| vec![num(e), num(d.0), num(d.1)])
            .collect();
        out.write_csv("defect.csv", &["epsilon", "max_abs", "tested"], &rows)?;
        defect_max = Some(defects.iter().map(|d| d.0).collect());
        identity = Some(sweep);
    }

    let time_mass: f64 = if traj.len() == 1 { 1.0 } else { chi.iter().sum::<f64>() * traj.dt };
    let floor = ROUND_OFF * flux_scale(&grid, &probe, &phi.footprint(&grid), time_mass);
    let (verdict, positive) = match &identity {
        Some(s) => (s.verdict.clone(), s.positive),
        None if probe.flux.values.iter().all(|&v| v <= floor) && floor > 0.0 => (
            format!("consistent with conservation: every flux is below the round-off floor {floor:e}"),
            true,
        ),
        None => flux_verdict(alpha.value, &probe.flux.values, &probe.flux),
    };
    let details = DiagnoseDetails {
        snapshots: traj.len(),
        epsilons,
        eta,
        kappa: dc.kappa,
        center,
        radius,
        alpha,
        pressure_solved,
        probe,
        identity,
        window,
        defect_max,
    };
    let mut seeds = vec![];
    if details.alpha.estimated {
        seeds.push(seed);
    }
    seeds.extend(traj.snapshots.iter().filter_map(|s| s.tags.seed));
    let outcome = Outcome {
        command: "diagnose".into(),
        verdict,
        positive,
        exit_code: super::exit_for(positive),
    };
    super::finish(out, &cfg, &seeds, outcome, &details)
}

/// Fluxes below this fraction of their a priori size count as zero.
const ROUND_OFF: f64 = 1e-12;

/// `max sup|R| sup|∇(φu)|` times the footprint volume and the time mass.
fn flux_scale(grid: &Grid, probe: &ScalingProbe, foot: &Region, time_mass: f64) -> f64 {
    let w = grid.quadrature_weights();
    let vol: f64 = foot.nodes().iter().map(|&x| w[x]).sum();
    let peak = probe
        .sup_stress
        .values
        .iter()
        .zip(&probe.sup_grad.values)
        .map(|(a, b)| a * b)
        .fold(0.0, f64::max);
    peak * vol * time_mass
}

/// Test-function centre and radius; defaults keep the region chain off the walls.
fn test_placement(grid: &Grid, dc: &DiagnoseConfig, eta: f64) -> Result<(Vec<f64>, f64)> {
    let nd = grid.ndim();
    let center = match &dc.center {
        Some(c) => c.clone(),
        None => (0..nd).map(|a| 0.5 * grid.extent(a)).collect(),
    };
    let radius = match dc.radius {
        Some(r) => r,
        None => {
            let periodic = (0..nd)
                .filter(|&a| grid.kind(a) == AxisKind::Periodic)
                .map(|a| grid.extent(a) / 4.0)
                .fold(f64::INFINITY, f64::min);
            let h = grid.max_spacing();
            let wall = match Domain::new(grid.clone())?.half_width() {
                Some(half) => half - 3.0 * eta - 2.0 * h,
                None => f64::INFINITY,
            };
            let r = periodic.min(wall);
            if !(r > 2.0 * h) {
                let max_feasible = Domain::new(grid.clone())?
                    .half_width()
                    .map_or(0.0, |half| (half - 6.0 * h) / 3.0);
                return Err(CoreError::DomainTooSmall { max_feasible }.into());
            }
            r
        }
    };
    Ok((center, radius))
}

/// Raised-cosine window spanning the trajectory; `None` below three snapshots.
fn default_window(traj: &Trajectory, dc: &DiagnoseConfig) -> Option<TimeWindow> {
    if traj.len() < 3 {
        return None;
    }
    if let Some(w) = dc.window {
        return Some(w);
    }
    let t0 = traj.snapshots[0].time;
    let t1 = traj.snapshots.last().unwrap().time;
    let margin = dc.kappa + dc.tau.map_or(0.0, |t| 3.0 * t);
    let half_width = (0.5 * (t1 - t0) - margin) * (1.0 - 1e-9);
    (half_width > 0.0).then_some(TimeWindow {
        center: 0.5 * (t0 + t1),
        half_width,
    })
}

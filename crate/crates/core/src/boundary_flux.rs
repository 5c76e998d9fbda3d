//! Boundary cutoffs, near-wall shell fluxes and the global energy balance.

use serde::{Deserialize, Serialize};

pub use crate::bump::{smooth_step, smooth_step_derivative};
use crate::calculus::{energy, pairwise_sum};
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::grid::{Domain, Geometry, Region, Trajectory};
use crate::pressure::{negative_sobolev_norm, SobolevRegion};
use crate::synth::{estimate_holder_exponent, HolderOptions};

/// The annulus `eta/4 < d < eta/2` next to the walls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellSpec {
    pub eta: f64,
    pub eta0: f64,
    pub lower: f64,
    pub upper: f64,
    /// Number of wall-normal grid planes strictly inside the shell.
    pub planes: usize,
}

impl ShellSpec {
    pub fn new(domain: &Domain, eta: f64, eta0: f64) -> Result<ShellSpec> {
        let w = domain.wall_axis().ok_or(Error::NoBoundary)?;
        let half = domain.half_width().unwrap();
        if !(eta > 0.0 && eta < eta0 && eta0 < half) {
            return Err(Error::param(
                "eta",
                format!("need 0 < eta < eta0 < {half} (got eta {eta}, eta0 {eta0})"),
            ));
        }
        let h = domain.grid().spacing()[w];
        let (lower, upper) = (eta / 4.0, eta / 2.0);
        let planes = (0..domain.grid().dims()[w])
            .map(|j| j as f64 * h)
            .filter(|&y| y > lower && y < upper)
            .count();
        if planes < 3 {
            return Err(Error::ShellUnderResolved { planes });
        }
        Ok(ShellSpec {
            eta,
            eta0,
            lower,
            upper,
            planes,
        })
    }

    /// Ceiling `eta0` defaults to just under the half-width.
    pub fn with_default_ceiling(domain: &Domain, eta: f64) -> Result<ShellSpec> {
        let half = domain.half_width().ok_or(Error::NoBoundary)?;
        ShellSpec::new(domain, eta, half * (1.0 - 1e-9))
    }

    pub fn contains(&self, d: f64) -> bool {
        d > self.lower && d < self.upper
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCutoff {
    pub psi: Vec<f64>,
    /// `∇ψ = -(1/eta) φ'(d/eta) n`, per component.
    pub grad: Vec<Vec<f64>>,
}

/// `ψ_eta = φ(d/eta)`; identically one on a periodic domain.
pub fn boundary_cutoff(domain: &Domain, shell: Option<&ShellSpec>) -> Result<BoundaryCutoff> {
    let g = domain.grid();
    let n = g.ndim();
    let (Some(w), Some(shell)) = (domain.wall_axis(), shell) else {
        if domain.geometry() != Geometry::Periodic {
            return Err(Error::param("eta", "a channel cutoff needs a shell"));
        }
        return Ok(BoundaryCutoff {
            psi: vec![1.0; g.len()],
            grad: vec![vec![0.0; g.len()]; n],
        });
    };
    let d = domain.distance_field()?;
    let sign = domain.normal_sign_field()?;
    let eta = shell.eta;
    let psi = d.iter().map(|&x| smooth_step(x / eta)).collect();
    let mut grad = vec![vec![0.0; g.len()]; n];
    for i in 0..g.len() {
        grad[w][i] = -smooth_step_derivative(d[i] / eta) / eta * sign[i];
    }
    Ok(BoundaryCutoff { psi, grad })
}

fn bernoulli_normal_flux(domain: &Domain, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    traj.snapshots
        .iter()
        .map(|s| {
            let p = s.pressure()?;
            let un = domain.normal_velocity(&s.velocity)?;
            Ok((0..s.grid.len())
                .map(|x| {
                    let e = 0.5 * s.velocity.iter().map(|c| c[x] * c[x]).sum::<f64>();
                    (e + p[x]) * un[x]
                })
                .collect())
        })
        .collect()
}

fn check_domain(domain: &Domain, traj: &Trajectory) -> Result<()> {
    if domain.grid() != traj.grid() {
        return Err(Error::Shape("trajectory grid differs from the domain grid".into()));
    }
    Ok(())
}

/// `(1/eta) ∫∫_shell |(|u|^2/2 + p) u·n| dx dt`, trapezoid in time.
pub fn shell_flux(traj: &Trajectory, shell: &ShellSpec, domain: &Domain) -> Result<f64> {
    check_domain(domain, traj)?;
    let g = domain.grid();
    let d = domain.distance_field()?;
    let w = g.quadrature_weights();
    let nodes: Vec<usize> = (0..g.len()).filter(|&x| shell.contains(d[x])).collect();
    let flux = bernoulli_normal_flux(domain, traj)?;
    let tw = traj.time_weights();
    let per_time: Vec<f64> = flux
        .iter()
        .zip(&tw)
        .map(|(f, wt)| wt * pairwise_sum(&nodes.iter().map(|&x| w[x] * f[x].abs()).collect::<Vec<_>>()))
        .collect();
    Ok(pairwise_sum(&per_time) / shell.eta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalBalanceReport {
    pub t1: f64,
    pub t2: f64,
    pub e1: f64,
    pub e2: f64,
    pub boundary_term: f64,
    pub residual: f64,
    /// Half-resolution estimate of the quadrature error in `residual`.
    pub budget: f64,
}

/// Weighted energies at `t1`, `t2` and the signed boundary work between them.
/// `shell` is ignored (and may be `None`) on a periodic domain.
pub fn global_balance(
    traj: &Trajectory,
    domain: &Domain,
    shell: Option<&ShellSpec>,
    t1: f64,
    t2: f64,
) -> Result<GlobalBalanceReport> {
    check_domain(domain, traj)?;
    let find = |t: f64| {
        traj.snapshots
            .iter()
            .position(|s| (s.time - t).abs() <= 1e-9 * traj.dt.max(1.0))
            .ok_or_else(|| Error::param("t1/t2", format!("{t} is not a snapshot time")))
    };
    let (k1, k2) = (find(t1)?, find(t2)?);
    if k2 < k1 {
        return Err(Error::param("t1/t2", "need t1 <= t2"));
    }
    let g = domain.grid();
    let cut = boundary_cutoff(domain, shell)?;
    let w = g.quadrature_weights();
    let weighted_energy = |k: usize, stride: usize| {
        let s = &traj.snapshots[k];
        let terms: Vec<f64> = (0..g.len())
            .filter(|&x| on_coarse(domain, x, stride))
            .map(|x| {
                let e = 0.5 * s.velocity.iter().map(|c| c[x] * c[x]).sum::<f64>();
                coarse_weight(domain, x, stride, &w) * e * cut.psi[x]
            })
            .collect();
        pairwise_sum(&terms)
    };
    let (e1, e2) = (weighted_energy(k1, 1), weighted_energy(k2, 1));
    let (boundary_term, coarse_term) = match domain.wall_axis() {
        None => (0.0, 0.0),
        Some(wa) => {
            let flux = bernoulli_normal_flux(domain, traj)?;
            let sign = domain.normal_sign_field()?;
            // u·n ψ' (1/η) = -(e+p) u·∇ψ with ∇ψ = -(1/η)φ' n
            let dens = |k: usize, stride: usize| {
                let terms: Vec<f64> = (0..g.len())
                    .filter(|&x| on_coarse(domain, x, stride))
                    .map(|x| -coarse_weight(domain, x, stride, &w) * flux[k][x] * cut.grad[wa][x] * sign[x])
                    .collect();
                pairwise_sum(&terms)
            };
            let fine: Vec<f64> = (k1..=k2).map(|k| dens(k, 1)).collect();
            let coarse: Vec<f64> = (k1..=k2).map(|k| dens(k, 2)).collect();
            (trapezoid(&fine, traj.dt), trapezoid(&coarse, traj.dt))
        }
    };
    let residual = (e2 - e1) + boundary_term;
    let scale = e1.abs().max(e2.abs()).max(boundary_term.abs());
    let coarse_residual = (weighted_energy(k2, 2) - weighted_energy(k1, 2)) + coarse_term;
    let budget = if domain.wall_axis().is_some() {
        (residual - coarse_residual).abs() + 1e-13 * scale
    } else {
        1e-13 * scale
    };
    Ok(GlobalBalanceReport {
        t1,
        t2,
        e1,
        e2,
        boundary_term,
        residual,
        budget,
    })
}

fn trapezoid(v: &[f64], dt: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mut terms = v.to_vec();
    terms[0] *= 0.5;
    *terms.last_mut().unwrap() *= 0.5;
    dt * pairwise_sum(&terms)
}

/// Every other node along the wall axis, starting from the lower wall.
fn on_coarse(domain: &Domain, x: usize, stride: usize) -> bool {
    match domain.wall_axis() {
        Some(w) if stride > 1 => domain.grid().unravel(x)[w] % stride == 0,
        _ => true,
    }
}

fn coarse_weight(domain: &Domain, x: usize, stride: usize, w: &[f64]) -> f64 {
    let Some(wa) = domain.wall_axis() else {
        return w[x];
    };
    if stride == 1 {
        return w[x];
    }
    let g = domain.grid();
    let j = g.unravel(x)[wa];
    let last = g.dims()[wa] - 1;
    // trapezoid weight on the coarse wall-normal lattice (last node may be off-lattice)
    let base = w[x] / g.axis_weight(wa, j);
    let h = g.spacing()[wa];
    let lo = if j == 0 { 0.0 } else { 0.5 * stride as f64 * h };
    let hi = if j + stride > last { 0.5 * (last - j) as f64 * h } else { 0.5 * stride as f64 * h };
    base * (lo + hi)
}

/// Thresholds of the finite-ladder surrogate for `Φ_eta -> 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerdictOptions {
    /// Final flux over initial flux must not exceed this.
    pub decay_factor: f64,
    /// Allowed growth between consecutive rungs.
    pub monotone_slack: f64,
    /// Negative Sobolev index for the near-wall pressure norm.
    pub beta: f64,
    /// Allowed growth of the near-wall pressure norm along the ladder.
    pub pressure_growth: f64,
    /// Relative energy drift counted as conservation.
    pub energy_tolerance: f64,
    pub holder: HolderOptions,
}

impl Default for VerdictOptions {
    fn default() -> Self {
        VerdictOptions {
            decay_factor: 0.25,
            monotone_slack: 0.1,
            beta: 1.0,
            pressure_growth: 0.1,
            energy_tolerance: 1e-6,
            holder: HolderOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellRow {
    pub eta: f64,
    pub planes: usize,
    pub flux: f64,
    /// Largest near-wall `H^{-beta}` norm of the pressure over the snapshots.
    pub pressure_norm: f64,
    pub balance: GlobalBalanceReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    Conserved,
    NotConserved,
    HypothesesFail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationVerdict {
    pub rows: Vec<ShellRow>,
    pub shell_flux: Check,
    pub interior_holder: Check,
    pub holder_exponent: Option<f64>,
    pub pressure_bound: Check,
    pub energy_drift: f64,
    pub energy: Check,
    pub options: VerdictOptions,
    pub kind: VerdictKind,
    pub verdict: String,
}

/// Checks the boundary hypotheses along a decreasing `eta` ladder and
/// compares them with the energy drift between the first and last snapshot.
pub fn conservation_verdict(
    traj: &Trajectory,
    domain: &Domain,
    etas: &[f64],
    opts: &VerdictOptions,
) -> Result<ConservationVerdict> {
    check_domain(domain, traj)?;
    if etas.len() < 3 {
        return Err(Error::TooFewRungs { got: etas.len(), need: 3 });
    }
    if etas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("etas", "ladder must be strictly decreasing"));
    }
    let first = &traj.snapshots[0];
    let last = traj.snapshots.last().unwrap();
    let g = domain.grid();
    let rows = etas
        .iter()
        .map(|&eta| -> Result<ShellRow> {
            let shell = ShellSpec::with_default_ceiling(domain, eta)?;
            let flux = shell_flux(traj, &shell, domain)?;
            let pressure_norm = traj
                .snapshots
                .iter()
                .map(|s| negative_sobolev_norm(g, s.pressure()?, opts.beta, &SobolevRegion::NearWall { gamma: eta }).map(|n| n.value))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            let balance = global_balance(traj, domain, Some(&shell), first.time, last.time)?;
            Ok(ShellRow {
                eta,
                planes: shell.planes,
                flux,
                pressure_norm,
                balance,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let fluxes: Vec<f64> = rows.iter().map(|r| r.flux).collect();
    let shell_check = ladder_decay(&fluxes, opts);

    let norms: Vec<f64> = rows.iter().map(|r| r.pressure_norm).collect();
    let bounded = norms.iter().all(|v| v.is_finite()) && norms.iter().all(|&v| v <= (1.0 + opts.pressure_growth) * norms[0]);
    let pressure_bound = Check {
        passed: bounded,
        detail: format!("near-wall pressure H^-{} norms {:?}", opts.beta, norms),
    };

    let margin = *etas.last().unwrap() / 2.0;
    let interior = Region::interior(g, margin);
    let mut exponent: Option<f64> = None;
    let mut holder_notes = Vec::new();
    for s in [first, last] {
        match estimate_holder_exponent(g, &s.velocity, &interior, &opts.holder) {
            Ok(est) => exponent = Some(exponent.map_or(est.exponent, |e: f64| e.min(est.exponent))),
            Err(e) => holder_notes.push(e.to_string()),
        }
    }
    let interior_holder = match exponent {
        Some(a) => Check {
            passed: a > 1.0 / 3.0,
            detail: format!("interior exponent {a:.3} (need > 1/3)"),
        },
        None => Check {
            passed: true,
            detail: format!("interior exponent not measurable, check skipped: {}", holder_notes.join("; ")),
        },
    };

    let (e1, e2) = (energy(first), energy(last));
    let energy_drift = if e1 == 0.0 { (e2 - e1).abs() } else { (e2 - e1).abs() / e1 };
    let energy_check = Check {
        passed: energy_drift <= opts.energy_tolerance,
        detail: format!("relative energy drift {energy_drift:.3e} (tolerance {:.1e})", opts.energy_tolerance),
    };

    let failed: Vec<&str> = [
        (&shell_check, "shell flux"),
        (&interior_holder, "interior Hölder"),
        (&pressure_bound, "near-wall pressure"),
    ]
    .iter()
    .filter(|(c, _)| !c.passed)
    .map(|(_, n)| *n)
    .collect();
    let (kind, verdict) = if !failed.is_empty() {
        (VerdictKind::HypothesesFail, format!("hypotheses fail ({})", failed.join(", ")))
    } else if energy_check.passed {
        (VerdictKind::Conserved, "hypotheses consistent, energy conserved".to_string())
    } else {
        (
            VerdictKind::NotConserved,
            "hypotheses consistent, energy NOT conserved (discretization or hypothesis failure)".to_string(),
        )
    };
    Ok(ConservationVerdict {
        rows,
        shell_flux: shell_check,
        interior_holder,
        holder_exponent: exponent,
        pressure_bound,
        energy_drift,
        energy: energy_check,
        options: opts.clone(),
        kind,
        verdict,
    })
}

/// Monotone within the slack and final at most `decay_factor` of the initial value.
pub fn ladder_decay(values: &[f64], opts: &VerdictOptions) -> Check {
    if values.iter().all(|&v| v == 0.0) {
        return Check {
            passed: true,
            detail: "all shell fluxes vanish".into(),
        };
    }
    let monotone = values.windows(2).all(|w| w[1] <= (1.0 + opts.monotone_slack) * w[0]);
    let ratio = values.last().unwrap() / values[0];
    Check {
        passed: monotone && ratio <= opts.decay_factor,
        detail: format!(
            "fluxes {values:?}; monotone within {}: {monotone}; final/initial {ratio:.3} (need <= {})",
            opts.monotone_slack, opts.decay_factor
        ),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub gamma: f64,
    /// `max (|u| + |p|)` over the near-wall layer `d < gamma`.
    pub bound: f64,
    /// `(d, max |u·n|)` per wall distance class, nearest first.
    pub envelope: Vec<(f64, f64)>,
    pub monotone: bool,
    pub intercept: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Near-wall bound and normal-velocity envelope; the envelope must extrapolate to zero at the wall.
pub fn modulus_check(traj: &Trajectory, domain: &Domain, gamma: f64, tolerance: f64) -> Result<ModulusReport> {
    check_domain(domain, traj)?;
    let half = domain.half_width().ok_or(Error::NoBoundary)?;
    if !(gamma > 0.0 && gamma < half) {
        return Err(Error::param("gamma", format!("need 0 < gamma < {half}")));
    }
    let g = domain.grid();
    let wa = domain.wall_axis().unwrap();
    let h = g.spacing()[wa];
    let d = domain.distance_field()?;
    let classes = (gamma / h).ceil() as usize;
    let mut envelope = vec![0.0f64; classes];
    let mut bound = 0.0f64;
    for s in &traj.snapshots {
        let p = s.pressure()?;
        let un = domain.normal_velocity(&s.velocity)?;
        for x in 0..g.len() {
            if d[x] >= gamma {
                continue;
            }
            let speed = s.velocity.iter().map(|c| c[x] * c[x]).sum::<f64>().sqrt();
            bound = bound.max(speed + p[x].abs());
            let k = (d[x] / h).round() as usize;
            envelope[k] = envelope[k].max(un[x].abs());
        }
    }
    let envelope: Vec<(f64, f64)> = envelope.into_iter().enumerate().map(|(k, v)| (k as f64 * h, v)).collect();
    let monotone = envelope.windows(2).all(|w| w[1].1 >= w[0].1);
    let near = &envelope[..envelope.len().min(3)];
    let intercept = if near.len() >= 2 {
        let xs: Vec<f64> = near.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = near.iter().map(|p| p.1).collect();
        linear_fit(&xs, &ys).map_or(near[0].1, |f| f.intercept)
    } else {
        near[0].1
    };
    Ok(ModulusReport {
        gamma,
        bound,
        envelope,
        monotone,
        intercept,
        tolerance,
        passed: intercept.abs() <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Snapshot};
    use std::f64::consts::PI;

    fn channel(nx: usize, ny: usize) -> Domain {
        Domain::new(Grid::channel(&[nx, ny], &[2.0 * PI, 1.0], 1).unwrap()).unwrap()
    }

    /// Steady cellular flow `ψ = sin x sin(πy)` with its Euler pressure.
    fn cellular(dom: &Domain) -> Snapshot {
        let g = dom.grid();
        let mut u = vec![vec![0.0; g.len()]; 2];
        let mut p = vec![0.0; g.len()];
        for i in 0..g.len() {
            let x = g.position(i);
            let (sx, cx, sy, cy) = (x[0].sin(), x[0].cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
            u[0][i] = PI * sx * cy;
            u[1][i] = -cx * sy;
            let psi = sx * sy;
            p[i] = -0.5 * (u[0][i] * u[0][i] + u[1][i] * u[1][i]) - 0.5 * (1.0 + PI * PI) * psi * psi;
        }
        let m = crate::pressure::pressure_mean(g, &p);
        p.iter_mut().for_each(|v| *v -= m);
        Snapshot::new(g.clone(), u, 0.0).unwrap().with_pressure(p).unwrap()
    }

    /// `u·n = d` near both walls with `|u|^2/2 + p ≡ 1`.
    fn linear_normal(dom: &Domain, slope: f64, offset: f64) -> Snapshot {
        let g = dom.grid();
        let d = dom.distance_field().unwrap();
        let sign = dom.normal_sign_field().unwrap();
        let mut u = vec![vec![0.0; g.len()]; 2];
        let mut p = vec![0.0; g.len()];
        for i in 0..g.len() {
            u[1][i] = sign[i] * (slope * d[i] + offset);
            p[i] = 1.0 - 0.5 * u[1][i] * u[1][i];
        }
        Snapshot::new(g.clone(), u, 0.0).unwrap().with_pressure(p).unwrap()
    }

    #[test]
    fn shell_admissibility() {
        let dom = channel(32, 65);
        let h = 1.0 / 64.0;
        assert!(matches!(ShellSpec::new(&dom, 8.0 * h, 0.4), Err(Error::ShellUnderResolved { planes: 1 })));
        assert_eq!(ShellSpec::new(&dom, 16.0 * h, 0.4).unwrap().planes, 3);
        assert!(ShellSpec::new(&dom, 0.45, 0.4).is_err());
        assert!(ShellSpec::new(&dom, 0.3, 0.5).is_err());
        let per = Domain::new(Grid::periodic_box(2, 16, 1.0).unwrap()).unwrap();
        assert!(matches!(ShellSpec::new(&per, 0.1, 0.2), Err(Error::NoBoundary)));
    }

    #[test]
    fn cutoff_values_and_gradient() {
        let dom = channel(16, 257);
        let h = 1.0 / 256.0;
        let eta = 64.0 * h;
        let shell = ShellSpec::with_default_ceiling(&dom, eta).unwrap();
        let c = boundary_cutoff(&dom, Some(&shell)).unwrap();
        let g = dom.grid();
        let at = |j: usize| g.flat(&[3, j]);
        assert_eq!(c.psi[at(64)], 1.0);
        assert_eq!(c.grad[1][at(64)], 0.0);
        assert_eq!(c.psi[at(8)], 0.0);
        assert_eq!(c.psi[at(256 - 8)], 0.0);
        let fd = crate::calculus::central_derivative(g, &c.psi, 1, 1);
        let err = (17..32).map(|j| (fd[at(j)] - c.grad[1][at(j)]).abs()).fold(0.0, f64::max);
        let scale = (17..32).map(|j| c.grad[1][at(j)].abs()).fold(0.0, f64::max);
        assert!(err <= 0.05 * scale, "{err} vs {scale}");
        // the upper wall has the opposite normal
        assert!(c.grad[1][at(256 - 24)] < 0.0 && c.grad[1][at(24)] > 0.0);
    }

    #[test]
    fn cutoff_gradient_converges_at_second_order() {
        let mut errs = Vec::new();
        for ny in [513usize, 1025, 2049] {
            let dom = channel(8, ny);
            let shell = ShellSpec::with_default_ceiling(&dom, 0.45).unwrap();
            let c = boundary_cutoff(&dom, Some(&shell)).unwrap();
            let fd = crate::calculus::central_derivative(dom.grid(), &c.psi, 1, 1);
            errs.push((0..dom.grid().len()).map(|i| (fd[i] - c.grad[1][i]).abs()).fold(0.0, f64::max));
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.7, "{errs:?}");
        }
    }

    #[test]
    fn tangential_flow_has_no_shell_flux() {
        let dom = channel(16, 65);
        let g = dom.grid();
        let u = vec![(0..g.len()).map(|i| g.position(i)[1].sin()).collect(), vec![0.0; g.len()]];
        let s = Snapshot::new(g.clone(), u, 0.0).unwrap().with_pressure(vec![0.3; g.len()]).unwrap();
        let traj = Trajectory::steady(&s, 3, 0.1);
        let shell = ShellSpec::with_default_ceiling(&dom, 0.3).unwrap();
        assert_eq!(shell_flux(&traj, &shell, &dom).unwrap(), 0.0);
    }

    #[test]
    fn linear_normal_flux_closed_form() {
        let dom = channel(16, 257);
        let h = 1.0 / 256.0;
        let traj = Trajectory::steady(&linear_normal(&dom, 1.0, 0.0), 5, 0.25);
        let big_t = 1.0;
        for (eta, lo, hi) in [(64.0 * h, 17usize, 31usize), (32.0 * h, 9, 15), (16.0 * h, 5, 7)] {
            let shell = ShellSpec::with_default_ceiling(&dom, eta).unwrap();
            let phi = shell_flux(&traj, &shell, &dom).unwrap();
            // both walls, x extent 2π, sum of d = j h over the shell planes
            let sum_j: usize = (lo..=hi).sum();
            let expect = big_t * 2.0 * 2.0 * PI * h * (sum_j as f64 * h) / eta;
            assert!((phi - expect).abs() <= 1e-10 * expect, "{phi} vs {expect}");
        }
    }

    #[test]
    fn halving_eta_halves_flux() {
        let dom = channel(16, 513);
        let h = 1.0 / 512.0;
        let traj = Trajectory::steady(&linear_normal(&dom, 1.0, 0.0), 3, 0.1);
        let f = |eta: f64| shell_flux(&traj, &ShellSpec::with_default_ceiling(&dom, eta).unwrap(), &dom).unwrap();
        let r = f(64.0 * h) / f(128.0 * h);
        assert!((r - 0.5).abs() <= 0.05, "{r}");
    }

    #[test]
    fn steady_cellular_balance() {
        let dom = channel(64, 65);
        let traj = Trajectory::steady(&cellular(&dom), 5, 0.1);
        let shell = ShellSpec::with_default_ceiling(&dom, 0.25).unwrap();
        let r = global_balance(&traj, &dom, Some(&shell), 0.0, 0.4).unwrap();
        assert_eq!(r.e1, r.e2);
        assert!(r.boundary_term.abs() <= r.budget.max(1e-14), "{r:?}");
        assert!(r.residual.abs() <= 1e-12, "{r:?}");
    }

    #[test]
    fn periodic_balance_is_energy_drift() {
        let dom = Domain::new(Grid::periodic_box(2, 32, 2.0 * PI).unwrap()).unwrap();
        let g = dom.grid().clone();
        let snaps: Vec<Snapshot> = (0..4)
            .map(|k| {
                let s = crate::synth::taylor_green(&g, 0.1 * k as f64, 0.05).unwrap();
                s
            })
            .collect();
        let traj = Trajectory::new(snaps, 0.1).unwrap();
        let r = global_balance(&traj, &dom, None, 0.0, 0.3).unwrap();
        let drift = energy(&traj.snapshots[3]) - energy(&traj.snapshots[0]);
        assert_eq!(r.boundary_term, 0.0);
        assert!((r.residual - drift).abs() <= 1e-14, "{} vs {drift}", r.residual);
    }

    #[test]
    fn zero_field_balance() {
        let dom = channel(16, 65);
        let s = Snapshot::zeros(dom.grid().clone(), 0.0).with_pressure(vec![0.0; dom.grid().len()]).unwrap();
        let traj = Trajectory::steady(&s, 3, 0.1);
        let shell = ShellSpec::with_default_ceiling(&dom, 0.3).unwrap();
        let r = global_balance(&traj, &dom, Some(&shell), 0.0, 0.2).unwrap();
        assert_eq!((r.e1, r.e2, r.boundary_term, r.residual), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn verdicts() {
        let dom = channel(64, 257);
        let h = 1.0 / 256.0;
        let etas = [64.0 * h, 32.0 * h, 16.0 * h];
        let opts = VerdictOptions::default();

        let good = Trajectory::steady(&cellular(&dom), 3, 0.1);
        let v = conservation_verdict(&good, &dom, &etas, &opts).unwrap();
        assert_eq!(v.kind, VerdictKind::Conserved, "{v:#?}");
        assert!(v.energy_drift <= 1e-8);

        let mut leak = cellular(&dom);
        let g = dom.grid().clone();
        for i in 0..g.len() {
            leak.velocity[1][i] += 0.2 * g.position(i)[1] - 0.1;
        }
        let lt = Trajectory::steady(&leak, 3, 0.1);
        let v = conservation_verdict(&lt, &dom, &etas, &opts).unwrap();
        assert_eq!(v.kind, VerdictKind::HypothesesFail, "{v:#?}");
        assert!(v.verdict.contains("shell flux"), "{}", v.verdict);

        let z = Snapshot::zeros(g.clone(), 0.0).with_pressure(vec![0.0; g.len()]).unwrap();
        let v = conservation_verdict(&Trajectory::steady(&z, 3, 0.1), &dom, &etas, &opts).unwrap();
        assert_eq!(v.kind, VerdictKind::Conserved, "{v:#?}");

        assert!(matches!(
            conservation_verdict(&good, &dom, &etas[..2], &opts),
            Err(Error::TooFewRungs { got: 2, need: 3 })
        ));
    }

    #[test]
    fn verdict_ignores_gauge_and_time_shift() {
        let dom = channel(64, 257);
        let h = 1.0 / 256.0;
        let etas = [64.0 * h, 32.0 * h, 16.0 * h];
        let opts = VerdictOptions::default();
        let base = Trajectory::steady(&cellular(&dom), 3, 0.1);
        let a = conservation_verdict(&base, &dom, &etas, &opts).unwrap();
        let mut shifted = base.time_shifted(2.5);
        for s in &mut shifted.snapshots {
            let p = s.pressure.as_mut().unwrap();
            p.iter_mut().for_each(|v| *v += 4.0);
            let m = crate::pressure::pressure_mean(dom.grid(), p);
            p.iter_mut().for_each(|v| *v -= m);
        }
        let b = conservation_verdict(&shifted, &dom, &etas, &opts).unwrap();
        assert_eq!(a.kind, b.kind);
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert!((x.flux - y.flux).abs() <= 1e-12 * x.flux, "{} {}", x.flux, y.flux);
        }
    }

    #[test]
    fn modulus_envelopes() {
        let dom = channel(16, 129);
        let gamma = 0.1;
        let noslip = Snapshot::zeros(dom.grid().clone(), 0.0).with_pressure(vec![1.0; dom.grid().len()]).unwrap();
        let r = modulus_check(&Trajectory::steady(&noslip, 2, 0.1), &dom, gamma, 1e-10).unwrap();
        assert!(r.envelope.iter().all(|p| p.1 == 0.0) && r.passed);

        let lin = linear_normal(&dom, 1.0, 0.0);
        let r = modulus_check(&Trajectory::steady(&lin, 2, 0.1), &dom, gamma, 1e-10).unwrap();
        assert!(r.intercept.abs() <= 1e-10 && r.passed && r.monotone, "{r:?}");

        let blow = linear_normal(&dom, 0.0, 0.1);
        let r = modulus_check(&Trajectory::steady(&blow, 2, 0.1), &dom, gamma, 1e-10).unwrap();
        assert!((r.intercept - 0.1).abs() <= 1e-12 && !r.passed, "{r:?}");
    }
}

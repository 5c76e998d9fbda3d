//! Discrete mollifiers, space-time smoothing, nested regions and cutoffs.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bump::{bump, smooth_step};
use crate::error::{Error, Result};
use crate::grid::{set_distance, Grid, Region, Snapshot, Trajectory};
use crate::spectral;

/// Radial bump kernel of radius `epsilon` sampled on node offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Mollifier {
    pub epsilon: f64,
    /// Closed-ball offsets; rim offsets carry zero weight.
    pub offsets: Vec<Vec<i64>>,
    pub weights: Vec<f64>,
    pub cell_volume: f64,
    pub ndim: usize,
}

pub fn make_mollifier(epsilon: f64, grid: &Grid) -> Result<Mollifier> {
    let floor = 2.0 * grid.max_spacing();
    if !(epsilon >= floor * (1.0 - 1e-12)) {
        return Err(Error::UnderResolved {
            radius: epsilon,
            floor,
        });
    }
    let offsets = grid.ball_offsets(epsilon);
    let mut weights: Vec<f64> = offsets
        .iter()
        .map(|o| {
            let r = o
                .iter()
                .zip(grid.spacing())
                .map(|(&k, &h)| (k as f64 * h).powi(2))
                .sum::<f64>()
                .sqrt();
            bump(r / epsilon)
        })
        .collect();
    let v = grid.cell_volume();
    let mass: f64 = weights.iter().sum::<f64>() * v;
    for w in &mut weights {
        *w /= mass;
    }
    Ok(Mollifier {
        epsilon,
        offsets,
        weights,
        cell_volume: v,
        ndim: grid.ndim(),
    })
}

impl Mollifier {
    /// Discrete mass `sum w * h^n`.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.cell_volume
    }

    /// Transform of the kernel on a fully periodic grid, scaled so that
    /// multiplication implements the discrete convolution.
    pub fn transform(&self, grid: &Grid) -> Result<Vec<Complex64>> {
        if !grid.is_periodic() {
            return Err(Error::param("grid", "spectral mollification needs a periodic grid"));
        }
        for (a, &n) in grid.dims().iter().enumerate() {
            let reach = self.offsets.iter().map(|o| o[a].unsigned_abs()).max().unwrap_or(0);
            if 2 * reach as usize >= n {
                return Err(Error::param("epsilon", "kernel wraps around the periodic box"));
            }
        }
        let mut k = vec![0.0; grid.len()];
        for (o, &w) in self.offsets.iter().zip(&self.weights) {
            let idx: Vec<usize> = o
                .iter()
                .zip(grid.dims())
                .map(|(&x, &n)| x.rem_euclid(n as i64) as usize)
                .collect();
            k[grid.flat(&idx)] += w * self.cell_volume;
        }
        Ok(spectral::forward(grid, &k))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Path {
    /// Spectral on fully periodic grids, direct otherwise.
    #[default]
    Auto,
    Direct,
    Spectral,
}

/// Nodes of `region` whose stencil leaves the grid or `valid`.
pub fn margin_offenders(
    grid: &Grid,
    moll: &Mollifier,
    region: &Region,
    valid: Option<&Region>,
) -> Vec<usize> {
    if valid.is_none() && grid.is_periodic() {
        return Vec::new();
    }
    region
        .nodes()
        .into_par_iter()
        .filter(|&x| {
            moll.offsets.iter().any(|o| match grid.offset(x, o) {
                None => true,
                Some(y) => valid.is_some_and(|v| !v.contains(y)),
            })
        })
        .collect()
}

/// `rho_eps * f` on the nodes of `region`; other entries are zero.
pub fn mollify_field(
    grid: &Grid,
    f: &[f64],
    moll: &Mollifier,
    region: &Region,
    valid: Option<&Region>,
    path: Path,
) -> Result<Vec<f64>> {
    if f.len() != grid.len() || region.mask().len() != grid.len() {
        return Err(Error::Shape("field or region does not match the grid".into()));
    }
    let bad = margin_offenders(grid, moll, region, valid);
    if !bad.is_empty() {
        return Err(Error::MarginViolation { nodes: bad });
    }
    let spectral_path = match path {
        Path::Auto => grid.is_periodic() && valid.is_none(),
        Path::Direct => false,
        Path::Spectral => true,
    };
    if spectral_path {
        let kh = moll.transform(grid)?;
        let full = spectral::circular_convolve(grid, f, &kh);
        return Ok(full
            .into_iter()
            .zip(region.mask())
            .map(|(v, &m)| if m { v } else { 0.0 })
            .collect());
    }
    let scaled: Vec<f64> = moll.weights.iter().map(|w| w * moll.cell_volume).collect();
    let out = (0..grid.len())
        .into_par_iter()
        .map(|x| {
            if !region.contains(x) {
                return 0.0;
            }
            let mut s = 0.0;
            for (o, w) in moll.offsets.iter().zip(&scaled) {
                let y = grid.offset(x, o).expect("margin checked");
                s += w * f[y];
            }
            s
        })
        .collect();
    Ok(out)
}

/// Componentwise [`mollify_field`].
pub fn mollify_vector(
    grid: &Grid,
    v: &[Vec<f64>],
    moll: &Mollifier,
    region: &Region,
    valid: Option<&Region>,
    path: Path,
) -> Result<Vec<Vec<f64>>> {
    v.iter()
        .map(|c| mollify_field(grid, c, moll, region, valid, path))
        .collect()
}

/// One-dimensional bump in time of radius `kappa`, sampled at multiples of `dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeMollifier {
    pub kappa: f64,
    pub dt: f64,
    /// Weights for shifts `-reach..=reach`.
    pub weights: Vec<f64>,
    pub reach: usize,
}

pub fn make_time_mollifier(kappa: f64, dt: f64) -> Result<TimeMollifier> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "time step must be positive"));
    }
    if !(kappa >= 2.0 * dt * (1.0 - 1e-12)) {
        return Err(Error::UnderResolved {
            radius: kappa,
            floor: 2.0 * dt,
        });
    }
    let reach = (kappa / dt + 1e-9).floor() as usize;
    let mut weights: Vec<f64> = (-(reach as i64)..=reach as i64)
        .map(|j| bump(j as f64 * dt / kappa))
        .collect();
    let mass: f64 = weights.iter().sum::<f64>() * dt;
    for w in &mut weights {
        *w /= mass;
    }
    Ok(TimeMollifier {
        kappa,
        dt,
        weights,
        reach,
    })
}

/// Nested regions `Q3 ⊂ Q2 ⊂ Q1 ⊂ Q~`, each the previous one dilated by `eta`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionChain {
    /// Innermost first.
    pub regions: Vec<Region>,
    pub eta: f64,
    pub tau: Option<f64>,
    /// Verified distances between each region and the complement of the next.
    pub gaps: Vec<f64>,
}

impl RegionChain {
    pub fn innermost(&self) -> &Region {
        &self.regions[0]
    }

    pub fn outermost(&self) -> &Region {
        self.regions.last().unwrap()
    }

    pub fn level(&self, i: usize) -> &Region {
        &self.regions[i]
    }

    pub fn with_time_margin(mut self, tau: f64) -> Result<RegionChain> {
        if !(tau > 0.0) {
            return Err(Error::param("tau", "time margin must be positive"));
        }
        self.tau = Some(tau);
        Ok(self)
    }
}

/// Dilates `support` outward by `i * eta` for `i = 0..=count` and verifies the
/// margins by brute force.
pub fn nested_regions(support: &Region, eta: f64, grid: &Grid, count: usize) -> Result<RegionChain> {
    if !(eta > 0.0) {
        return Err(Error::param("eta", "margin must be positive"));
    }
    if support.is_empty() {
        return Err(Error::param("support", "must be nonempty"));
    }
    if count == 0 {
        return Err(Error::param("count", "need at least one dilation"));
    }
    let mut regions = vec![support.clone()];
    for _ in 0..count {
        let (next, clipped) = regions.last().unwrap().dilate(grid, eta);
        if clipped {
            return Err(Error::DomainTooSmall {
                max_feasible: max_feasible_margin(support, grid, count),
            });
        }
        regions.push(next);
    }
    let mut gaps = Vec::with_capacity(count);
    for w in regions.windows(2) {
        let d = set_distance(grid, &w[0], &w[1].complement());
        if d < eta * (1.0 - 1e-12) {
            return Err(Error::DomainTooSmall {
                max_feasible: max_feasible_margin(support, grid, count),
            });
        }
        gaps.push(d);
    }
    Ok(RegionChain {
        regions,
        eta,
        tau: None,
        gaps,
    })
}

/// Largest margin whose `count`-fold dilation of `support` stays off the walls.
fn max_feasible_margin(support: &Region, grid: &Grid, count: usize) -> f64 {
    let mut dmin = f64::INFINITY;
    for x in support.nodes() {
        let idx = grid.unravel(x);
        for a in 0..grid.ndim() {
            if grid.kind(a) == crate::grid::AxisKind::Wall {
                let h = grid.spacing()[a];
                let lo = idx[a] as f64 * h;
                let hi = (grid.dims()[a] - 1 - idx[a]) as f64 * h;
                dmin = dmin.min(lo).min(hi);
            }
        }
    }
    // dilation by r touches a wall once r reaches the wall distance, so stop one node short
    let h = grid.max_spacing();
    ((dmin - h).max(0.0) / count as f64).max(0.0)
}

/// Smooth cutoff equal to 1 on `inner`, 0 outside `outer`.
#[derive(Clone, Debug, PartialEq)]
pub struct CutoffField {
    pub values: Vec<f64>,
    pub inner: Region,
    pub outer: Region,
    /// Gap between `inner` and the complement of `outer`.
    pub width: f64,
}

/// Transition profile on `[0, 1]` built from the boundary smooth step.
pub fn unit_step(s: f64) -> f64 {
    smooth_step(0.25 + 0.25 * s.clamp(0.0, 1.0))
}

pub fn cutoff_region(grid: &Grid, inner: &Region, outer: &Region) -> Result<CutoffField> {
    if inner.is_empty() || !inner.is_subset_of(outer) {
        return Err(Error::param("inner", "must be a nonempty subset of outer"));
    }
    if inner == outer {
        return Err(Error::ZeroWidthTransition);
    }
    let comp = outer.complement();
    let width = set_distance(grid, inner, &comp);
    if width < 2.0 * grid.max_spacing() * (1.0 - 1e-12) {
        return Err(Error::param(
            "outer",
            format!("gap {width} between inner and the complement of outer is below 2h"),
        ));
    }
    let targets = {
        let b = comp.boundary_nodes(grid);
        if b.is_empty() {
            comp.nodes()
        } else {
            b
        }
    };
    let values = (0..grid.len())
        .into_par_iter()
        .map(|x| {
            if inner.contains(x) {
                return 1.0;
            }
            if !outer.contains(x) {
                return 0.0;
            }
            if targets.is_empty() {
                return 1.0;
            }
            let g = targets
                .iter()
                .map(|&y| grid.distance(x, y))
                .fold(f64::INFINITY, f64::min);
            unit_step(g / width)
        })
        .collect();
    Ok(CutoffField {
        values,
        inner: inner.clone(),
        outer: outer.clone(),
        width,
    })
}

fn time_window(traj: &Trajectory, reach: usize) -> Result<std::ops::Range<usize>> {
    let n = traj.len();
    if n < 2 * reach + 1 {
        return Err(Error::param(
            "kappa",
            format!("time stencil needs {} snapshots, trajectory has {n}", 2 * reach + 1),
        ));
    }
    Ok(reach..n - reach)
}

/// Convolution in time only; output covers the snapshots whose stencil fits.
pub fn mollify_time(traj: &Trajectory, tm: &TimeMollifier) -> Result<Trajectory> {
    if (tm.dt - traj.dt).abs() > 1e-12 * traj.dt.abs().max(1.0) {
        return Err(Error::param("dt", "time mollifier step differs from the trajectory"));
    }
    let window = time_window(traj, tm.reach)?;
    let r = tm.reach as i64;
    let combine = |k: usize, get: &dyn Fn(&Snapshot) -> &[f64]| -> Vec<f64> {
        let len = get(&traj.snapshots[k]).len();
        let mut acc = vec![0.0; len];
        for (j, w) in (-r..=r).zip(&tm.weights) {
            let s = &traj.snapshots[(k as i64 + j) as usize];
            for (a, v) in acc.iter_mut().zip(get(s)) {
                *a += w * tm.dt * v;
            }
        }
        acc
    };
    let mut out = Vec::new();
    for k in window {
        let base = &traj.snapshots[k];
        let velocity = (0..base.velocity.len())
            .map(|c| combine(k, &|s: &Snapshot| s.velocity[c].as_slice()))
            .collect();
        let pressure = if traj.snapshots.iter().all(|s| s.pressure.is_some()) {
            Some(combine(k, &|s: &Snapshot| s.pressure.as_deref().unwrap()))
        } else {
            None
        };
        out.push(Snapshot {
            grid: base.grid.clone(),
            velocity,
            pressure,
            time: base.time,
            tags: base.tags.clone(),
        });
    }
    Trajectory::new(out, traj.dt)
}

/// Spatial mollification of every snapshot onto `region`.
pub fn mollify_space(
    traj: &Trajectory,
    moll: &Mollifier,
    region: &Region,
    valid: Option<&Region>,
    path: Path,
) -> Result<Trajectory> {
    let grid = traj.grid().clone();
    let snaps = traj
        .snapshots
        .iter()
        .map(|s| {
            let velocity = mollify_vector(&grid, &s.velocity, moll, region, valid, path)?;
            let pressure = s
                .pressure
                .as_ref()
                .map(|p| mollify_field(&grid, p, moll, region, valid, path))
                .transpose()?;
            Ok(Snapshot {
                grid: grid.clone(),
                velocity,
                pressure,
                time: s.time,
                tags: s.tags.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(snaps, traj.dt)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    TimeFirst,
    SpaceFirst,
}

/// Space-time mollification onto the innermost region of `chain`; the data
/// are taken to be valid on the outermost region.
pub fn time_space_mollify(
    traj: &Trajectory,
    epsilon: f64,
    kappa: f64,
    chain: &RegionChain,
    order: Order,
) -> Result<Trajectory> {
    if epsilon > chain.eta / 2.0 * (1.0 + 1e-12) {
        return Err(Error::param("epsilon", format!("must not exceed eta/2 = {}", chain.eta / 2.0)));
    }
    if let Some(tau) = chain.tau {
        if kappa > tau / 2.0 * (1.0 + 1e-12) {
            return Err(Error::param("kappa", format!("must not exceed tau/2 = {}", tau / 2.0)));
        }
    }
    let grid = traj.grid();
    let moll = make_mollifier(epsilon, grid)?;
    let tm = make_time_mollifier(kappa, traj.dt)?;
    let valid = Some(chain.outermost());
    let region = chain.innermost();
    match order {
        Order::TimeFirst => {
            let t = mollify_time(traj, &tm)?;
            mollify_space(&t, &moll, region, valid, Path::Direct)
        }
        Order::SpaceFirst => {
            let s = mollify_space(traj, &moll, region, valid, Path::Direct)?;
            mollify_time(&s, &tm)
        }
    }
}

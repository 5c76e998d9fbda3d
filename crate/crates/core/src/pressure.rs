//! Pressure recovery from the Poisson equation `-Δp = ∂i∂j(ui uj)` and the
//! interior pressure-regularity comparison.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bump::smooth_step;
use crate::calculus::{self, derivative, max_abs, pairwise_sum};
use crate::error::{Error, Result};
use crate::grid::{AxisKind, Domain, Grid, Region, Snapshot};
use crate::mollify::RegionChain;
use crate::spectral::{self, derivative_wavenumber, wavenumber};
use crate::synth::{holder_norm, HolderOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureSolveReport {
    pub pressure: Vec<f64>,
    /// Max-norm of `-Δp - ∂i∂j(ui uj)` over interior nodes.
    pub residual: f64,
    /// Mean used for the gauge after re-zeroing (should be ~0).
    pub gauge_mean: f64,
    pub boundary_condition: String,
}

fn periodic_axes(grid: &Grid) -> Vec<usize> {
    (0..grid.ndim())
        .filter(|&a| grid.kind(a) == AxisKind::Periodic)
        .collect()
}

/// Per-bin derivative wavenumbers along `axis` (Nyquist zeroed).
fn dk(grid: &Grid, flat: usize, axis: usize) -> f64 {
    let idx = grid.unravel(flat);
    derivative_wavenumber(idx[axis], grid.dims()[axis], grid.extent(axis))
}

/// Squared full wavenumber over the periodic axes.
fn k2(grid: &Grid, flat: usize) -> f64 {
    let idx = grid.unravel(flat);
    periodic_axes(grid)
        .into_iter()
        .map(|a| wavenumber(idx[a], grid.dims()[a], grid.extent(a)).powi(2))
        .sum()
}

fn products(v: &[Vec<f64>]) -> Vec<(usize, usize, Vec<f64>)> {
    let n = v.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            out.push((i, j, v[i].iter().zip(&v[j]).map(|(a, b)| a * b).collect()));
        }
    }
    out
}

/// Spectral transform of `∂i∂j(ui uj)` on a fully periodic grid.
fn periodic_source_hat(grid: &Grid, v: &[Vec<f64>]) -> Vec<Complex64> {
    let mut src = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (i, j, uu) in products(v) {
        let f = spectral::forward(grid, &uu);
        let mult = if i == j { 1.0 } else { 2.0 };
        for (m, (s, z)) in src.iter_mut().zip(f).enumerate() {
            *s -= z * (mult * dk(grid, m, i) * dk(grid, m, j));
        }
    }
    src
}

/// Spectral solve on a fully periodic box with the mean-zero gauge.
pub fn solve_pressure_periodic(s: &Snapshot) -> Result<PressureSolveReport> {
    let grid = &s.grid;
    if !grid.is_periodic() {
        return Err(Error::param("snapshot", "periodic solve needs a fully periodic grid"));
    }
    let src = periodic_source_hat(grid, &s.velocity);
    let phat: Vec<Complex64> = src
        .iter()
        .enumerate()
        .map(|(m, z)| {
            let kk = k2(grid, m);
            if kk == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                z / kk
            }
        })
        .collect();
    let lap: Vec<Complex64> = phat.iter().enumerate().map(|(m, z)| z * k2(grid, m)).collect();
    let minus_lap = spectral::inverse_real(grid, lap);
    let source = spectral::inverse_real(grid, src);
    let residual = max_abs(
        &minus_lap
            .iter()
            .zip(&source)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    let mut p = spectral::inverse_real(grid, phat);
    let mean = pairwise_sum(&p) / p.len() as f64;
    for x in &mut p {
        *x -= mean;
    }
    Ok(PressureSolveReport {
        gauge_mean: pairwise_sum(&p) / p.len() as f64,
        pressure: p,
        residual,
        boundary_condition: "periodic".into(),
    })
}

/// `∂i∂j(ui uj)` with the mixed spectral / central calculus.
pub fn quadratic_source(grid: &Grid, v: &[Vec<f64>]) -> Vec<f64> {
    let mut src = vec![0.0; grid.len()];
    for (i, j, uu) in products(v) {
        let d = derivative(grid, &derivative(grid, &uu, j), i);
        let mult = if i == j { 1.0 } else { 2.0 };
        for (s, x) in src.iter_mut().zip(d) {
            *s += mult * x;
        }
    }
    src
}

/// Second-order Neumann Poisson solve `-Δp = source` on a channel, with
/// `∂p/∂y = neumann_lo` on the lower wall plane and `neumann_hi` on the upper
/// one (`y` the wall axis; both arrays indexed like the wall planes, i.e. by
/// flat indices of the lower-wall nodes). Mean zero over interior nodes.
pub fn solve_channel_poisson(
    grid: &Grid,
    source: &[f64],
    neumann_lo: &[f64],
    neumann_hi: &[f64],
) -> Result<Vec<f64>> {
    let wall = (0..grid.ndim())
        .find(|&a| grid.kind(a) == AxisKind::Wall)
        .ok_or(Error::NoBoundary)?;
    let ny = grid.dims()[wall];
    let h = grid.spacing()[wall];
    let stride = grid.strides()[wall];
    let plane: Vec<usize> = (0..grid.len())
        .filter(|&f| grid.unravel(f)[wall] == 0)
        .collect();
    if neumann_lo.len() != plane.len() || neumann_hi.len() != plane.len() {
        return Err(Error::Shape("Neumann data must have one value per wall node".into()));
    }
    // fold the Neumann data into the wall rows, then transform tangentially
    let mut rhs = source.to_vec();
    for (k, &f) in plane.iter().enumerate() {
        rhs[f] -= 2.0 * neumann_lo[k] / h;
        rhs[f + (ny - 1) * stride] += 2.0 * neumann_hi[k] / h;
    }
    let rhat = spectral::forward(grid, &rhs);
    let lines: Vec<Vec<Complex64>> = plane
        .par_iter()
        .map(|&f0| {
            let kk = k2(grid, f0);
            let b: Vec<Complex64> = (0..ny).map(|j| rhat[f0 + j * stride]).collect();
            solve_line(ny, h, kk, b)
        })
        .collect();
    let mut phat = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (&f0, line) in plane.iter().zip(lines) {
        for (j, z) in line.into_iter().enumerate() {
            phat[f0 + j * stride] = z;
        }
    }
    let mut p = spectral::inverse_real(grid, phat);
    gauge_interior(grid, wall, &mut p);
    Ok(p)
}

/// Tridiagonal solve of `(2p_j - p_{j±1}) / h^2 + k2 p_j = b_j` with ghost-node
/// Neumann rows at both ends. The zero mode is projected onto the range
/// (trapezoid weights span the left null space) and pinned at `p_0 = 0`.
fn solve_line(ny: usize, h: f64, kk: f64, mut b: Vec<Complex64>) -> Vec<Complex64> {
    let ih2 = 1.0 / (h * h);
    let mut lower = vec![-ih2; ny];
    let mut diag = vec![2.0 * ih2 + kk; ny];
    let mut upper = vec![-ih2; ny];
    upper[0] = -2.0 * ih2;
    lower[ny - 1] = -2.0 * ih2;
    if kk == 0.0 {
        let w = |j: usize| if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
        let num: Complex64 = (0..ny).map(|j| b[j] * w(j)).sum();
        let den: f64 = (0..ny).map(w).sum();
        let mean = num / den;
        for z in &mut b {
            *z -= mean;
        }
        diag[0] = 1.0;
        upper[0] = 0.0;
        b[0] = Complex64::new(0.0, 0.0);
    }
    // Thomas algorithm
    let mut c = vec![0.0; ny];
    let mut d = vec![Complex64::new(0.0, 0.0); ny];
    c[0] = upper[0] / diag[0];
    d[0] = b[0] / diag[0];
    for j in 1..ny {
        let m = diag[j] - lower[j] * c[j - 1];
        c[j] = if j + 1 < ny { upper[j] / m } else { 0.0 };
        d[j] = (b[j] - d[j - 1] * lower[j]) / m;
    }
    let mut x = vec![Complex64::new(0.0, 0.0); ny];
    x[ny - 1] = d[ny - 1];
    for j in (0..ny - 1).rev() {
        x[j] = d[j] - x[j + 1] * c[j];
    }
    x
}

fn interior_nodes(grid: &Grid, wall: usize) -> Vec<usize> {
    let ny = grid.dims()[wall];
    (0..grid.len())
        .filter(|&f| {
            let j = grid.unravel(f)[wall];
            j > 0 && j + 1 < ny
        })
        .collect()
}

fn gauge_interior(grid: &Grid, wall: usize, p: &mut [f64]) -> f64 {
    let nodes = interior_nodes(grid, wall);
    let vals: Vec<f64> = nodes.iter().map(|&f| p[f]).collect();
    let mean = pairwise_sum(&vals) / vals.len() as f64;
    for x in p.iter_mut() {
        *x -= mean;
    }
    mean
}

/// Physical Neumann problem on a channel: `∂p/∂n = -(u·∇u)·n` on the walls.
pub fn solve_pressure_channel(s: &Snapshot) -> Result<PressureSolveReport> {
    let grid = &s.grid;
    let domain = Domain::new(grid.clone())?;
    let wall = domain.wall_axis().ok_or(Error::NoBoundary)?;
    let ny = grid.dims()[wall];
    let stride = grid.strides()[wall];
    let scale = s
        .velocity
        .iter()
        .map(|c| max_abs(c))
        .fold(1.0f64, f64::max);
    let normal = crate::grid::max_wall_normal(&domain, &s.velocity)?;
    if normal > 1e-10 * scale {
        return Err(Error::ImpermeabilityViolated { max_normal: normal });
    }
    let source = quadratic_source(grid, &s.velocity);
    // (u·∇)u_y at the walls
    let uy = &s.velocity[wall];
    let mut adv = vec![0.0; grid.len()];
    for (a, ua) in s.velocity.iter().enumerate() {
        let d = derivative(grid, uy, a);
        for ((o, x), u) in adv.iter_mut().zip(d).zip(ua) {
            *o += u * x;
        }
    }
    let plane: Vec<usize> = (0..grid.len())
        .filter(|&f| grid.unravel(f)[wall] == 0)
        .collect();
    let lo: Vec<f64> = plane.iter().map(|&f| -adv[f]).collect();
    let hi: Vec<f64> = plane.iter().map(|&f| -adv[f + (ny - 1) * stride]).collect();
    let p = solve_channel_poisson(grid, &source, &lo, &hi)?;
    let residual = channel_residual(grid, wall, &p, &source);
    let nodes = interior_nodes(grid, wall);
    let gauge_mean = pairwise_sum(&nodes.iter().map(|&f| p[f]).collect::<Vec<_>>()) / nodes.len() as f64;
    Ok(PressureSolveReport {
        pressure: p,
        residual,
        gauge_mean,
        boundary_condition: "neumann: dp/dn = -(u.grad u).n".into(),
    })
}

/// Discrete `-Δp - source` (spectral tangential, 3-point wall-normal) on interior nodes.
fn channel_residual(grid: &Grid, wall: usize, p: &[f64], source: &[f64]) -> f64 {
    let h = grid.spacing()[wall];
    let mut lap = vec![0.0; grid.len()];
    let ph = spectral::forward(grid, p);
    let t: Vec<Complex64> = ph.iter().enumerate().map(|(m, z)| -z * k2(grid, m)).collect();
    let tang = spectral::inverse_real(grid, t);
    for (l, x) in lap.iter_mut().zip(tang) {
        *l += x;
    }
    let mut worst = 0.0f64;
    for f in interior_nodes(grid, wall) {
        let up = grid.shift(f, wall, 1).unwrap();
        let dn = grid.shift(f, wall, -1).unwrap();
        let l = lap[f] + (p[up] - 2.0 * p[f] + p[dn]) / (h * h);
        worst = worst.max((-l - source[f]).abs());
    }
    worst
}

/// Solve with whichever boundary treatment the grid calls for.
pub fn solve_pressure(s: &Snapshot) -> Result<PressureSolveReport> {
    if s.grid.is_periodic() {
        solve_pressure_periodic(s)
    } else {
        solve_pressure_channel(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SobolevRegion {
    /// No cutoff.
    Whole,
    /// Smooth cutoff `1 - smooth_step(d / (2 gamma))`, supported in `d < gamma`.
    NearWall { gamma: f64 },
    /// Indicator of a node set.
    #[serde(skip)]
    Mask(Region),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevNormEstimate {
    pub beta: f64,
    pub value: f64,
    pub region: String,
    /// Weighting convention used for the spectral sum.
    pub convention: String,
}

/// `(Vol * Σ (1+|k|^2)^-beta |f̂(k)|^2)^{1/2}` of the cut-off field, `f̂` the
/// DFT divided by the node count. Wall axes are odd-extended to twice their
/// length (a sine series of the interior values).
pub fn negative_sobolev_norm(
    grid: &Grid,
    f: &[f64],
    beta: f64,
    region: &SobolevRegion,
) -> Result<SobolevNormEstimate> {
    if !(beta >= 0.0) {
        return Err(Error::param("beta", "must be nonnegative"));
    }
    if f.len() != grid.len() {
        return Err(Error::Shape("field does not match the grid".into()));
    }
    let cut: Vec<f64> = match region {
        SobolevRegion::Whole => f.to_vec(),
        SobolevRegion::NearWall { gamma } => {
            if !(*gamma > 0.0) {
                return Err(Error::param("gamma", "must be positive"));
            }
            let d = Domain::new(grid.clone())?.distance_field()?;
            f.iter()
                .zip(&d)
                .map(|(v, &dd)| v * (1.0 - smooth_step(dd / (2.0 * gamma))))
                .collect()
        }
        SobolevRegion::Mask(r) => f
            .iter()
            .zip(r.mask())
            .map(|(v, &m)| if m { *v } else { 0.0 })
            .collect(),
    };
    // odd extension of every wall axis
    let mut dims = grid.dims().to_vec();
    let mut extents: Vec<f64> = (0..grid.ndim()).map(|a| grid.extent(a)).collect();
    let walls: Vec<usize> = (0..grid.ndim())
        .filter(|&a| grid.kind(a) == AxisKind::Wall)
        .collect();
    for &a in &walls {
        dims[a] = 2 * (grid.dims()[a] - 1);
        extents[a] *= 2.0;
    }
    let ext = Grid::new(&dims, &extents, &vec![AxisKind::Periodic; grid.ndim()])?;
    let mut data = vec![0.0; ext.len()];
    for (e, slot) in data.iter_mut().enumerate() {
        let idx = ext.unravel(e);
        let mut src = [0usize; 3];
        let mut sign = 1.0;
        for a in 0..grid.ndim() {
            src[a] = idx[a];
            if walls.contains(&a) {
                let m = grid.dims()[a] - 1;
                if idx[a] == 0 || idx[a] == m {
                    sign = 0.0;
                } else if idx[a] > m {
                    src[a] = 2 * m - idx[a];
                    sign = -sign;
                }
            }
        }
        if sign != 0.0 {
            *slot = sign * cut[grid.flat(&src[..grid.ndim()])];
        }
    }
    let hat = spectral::forward(&ext, &data);
    let n = ext.len() as f64;
    let kv = spectral::wavevectors(&ext);
    let terms: Vec<f64> = hat
        .iter()
        .zip(&kv)
        .map(|(z, k)| {
            let kk = k.iter().map(|x| x * x).sum::<f64>();
            (1.0 + kk).powf(-beta) * (z / n).norm_sqr()
        })
        .collect();
    let vol_ext = ext.volume();
    let fold = 2f64.powi(walls.len() as i32);
    let value = (vol_ext * pairwise_sum(&terms) / fold).sqrt();
    Ok(SobolevNormEstimate {
        beta,
        value,
        region: match region {
            SobolevRegion::Whole => "whole".into(),
            SobolevRegion::NearWall { gamma } => format!("near-wall gamma={gamma}"),
            SobolevRegion::Mask(r) => format!("mask ({} nodes)", r.len()),
        },
        convention: "sum (1+|k|^2)^-beta |dft/N|^2 * volume; wall axes odd-extended".into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderComparison {
    /// Pressure seminorm on the second region of the chain.
    pub pressure_seminorm: f64,
    /// Squared velocity seminorm on the outermost region.
    pub velocity_seminorm_sq: f64,
    pub near_wall_norm: f64,
    /// `pressure / (velocity^2 + near_wall)`; `None` for 0/0.
    pub ratio: Option<f64>,
    pub note: Option<String>,
}

/// Compares the interior pressure seminorm with the quantities that bound it.
/// Diagnostic only: the elliptic constant is not known.
pub fn interior_holder_check(
    s: &Snapshot,
    chain: &RegionChain,
    alpha: f64,
    beta: f64,
    near_wall: &SobolevRegion,
) -> Result<HolderComparison> {
    let p = s.pressure()?;
    if !(alpha > 1.0 / 3.0 && alpha < 1.0) {
        return Err(Error::param("alpha", "must lie in (1/3, 1)"));
    }
    if chain.regions.len() < 3 {
        return Err(Error::param("chain", "needs at least three regions"));
    }
    let opts = HolderOptions::default();
    let pn = holder_norm(&s.grid, std::slice::from_ref(&p.to_vec()), alpha, chain.level(1), &opts)?
        .seminorm;
    let un = holder_norm(&s.grid, &s.velocity, alpha, chain.outermost(), &opts)?.seminorm;
    let sob = negative_sobolev_norm(&s.grid, p, beta, near_wall)?.value;
    let den = un * un + sob;
    let (ratio, note) = if den == 0.0 && pn == 0.0 {
        (None, Some("0/0 degenerate".to_string()))
    } else if den == 0.0 {
        (None, Some("zero bound with nonzero pressure seminorm".to_string()))
    } else {
        (Some(pn / den), None)
    };
    Ok(HolderComparison {
        pressure_seminorm: pn,
        velocity_seminorm_sq: un * un,
        near_wall_norm: sob,
        ratio,
        note,
    })
}

/// Integral of the pressure with the trapezoid rule, for gauge checks.
pub fn pressure_mean(grid: &Grid, p: &[f64]) -> f64 {
    calculus::integrate(grid, p) / grid.volume()
}

//! Synthetic velocity fields with known regularity and conservation
//! properties, and Hölder-regularity estimation.

mod holder;

pub use holder::{
    estimate_holder_exponent, holder_norm, region_extents, HolderEstimate, HolderNorm,
    HolderOptions,
};

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus;
use crate::error::{Error, Result};
use crate::grid::{Grid, Snapshot, Tags};
use crate::spectral;

/// Divergence tolerance recorded on snapshots the generators tag divergence-free.
pub const DIVERGENCE_TAG_TOLERANCE: f64 = 1e-10;

/// `amplitude * sin(frequency * s + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// `amplitude * cos(ka * a + kb * b + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineTerm {
    pub amplitude: f64,
    pub ka: f64,
    pub kb: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// `u = (U(x2), 0, W(x1 - t U(x2), x2))` with trigonometric profiles.
    Shear {
        u: Vec<SineTerm>,
        w: Vec<CosineTerm>,
        #[serde(default)]
        t: f64,
    },
    /// Random-phase divergence-free field with spectrum `|k|^-(alpha + n/2)`.
    Fractional {
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<usize>,
        seed: u64,
    },
    TaylorGreenSteady,
    TaylorGreenViscous { nu: f64, t: f64 },
    /// No-slip channel data: a Poiseuille profile plus a wall-clamped vortex row.
    ChannelFlow {
        #[serde(default)]
        poiseuille: f64,
        #[serde(default)]
        vortex: f64,
        #[serde(default = "one")]
        mode: u32,
    },
}

fn one() -> u32 {
    1
}

impl GeneratorSpec {
    pub fn generate(&self, grid: &Grid) -> Result<Snapshot> {
        let mut snap = match self {
            GeneratorSpec::Shear { u, w, t } => {
                check_shear_periodicity(grid, u, w)?;
                shear_flow(
                    |s| u.iter().map(|m| m.amplitude * (m.frequency * s + m.phase).sin()).sum(),
                    |a, b| {
                        w.iter()
                            .map(|m| m.amplitude * (m.ka * a + m.kb * b + m.phase).cos())
                            .sum()
                    },
                    *t,
                    grid,
                )?
            }
            GeneratorSpec::Fractional {
                alpha,
                cutoff,
                seed,
            } => fractional_field(*alpha, cutoff.unwrap_or_else(|| default_cutoff(grid)), *seed, grid)?,
            GeneratorSpec::TaylorGreenSteady => taylor_green(grid, 0.0, 0.0)?,
            GeneratorSpec::TaylorGreenViscous { nu, t } => taylor_green(grid, *t, *nu)?,
            GeneratorSpec::ChannelFlow {
                poiseuille,
                vortex,
                mode,
            } => channel_flow(grid, *poiseuille, *vortex, *mode)?,
        };
        snap.tags.generator = Some(serde_json::to_value(self)?);
        if let GeneratorSpec::Fractional { seed, .. } = self {
            snap.tags.seed = Some(*seed);
        }
        Ok(snap)
    }
}

fn check_shear_periodicity(grid: &Grid, u: &[SineTerm], w: &[CosineTerm]) -> Result<()> {
    if grid.ndim() != 3 {
        return Err(Error::param("grid", "shear flow is intrinsically three-dimensional"));
    }
    let whole = |f: f64, axis: usize| {
        let cycles = f * grid.extent(axis) / (2.0 * PI);
        (cycles - cycles.round()).abs() < 1e-9
    };
    if !u.iter().all(|m| whole(m.frequency, 1)) {
        return Err(Error::param("u", "profile frequencies must be periodic on axis 1"));
    }
    if !w.iter().all(|m| whole(m.ka, 0) && whole(m.kb, 1)) {
        return Err(Error::param("w", "profile frequencies must be periodic on axes 0 and 1"));
    }
    Ok(())
}

/// Default spectral cutoff: a third of the smallest node count, so that
/// quadratic products stay alias-free.
pub fn default_cutoff(grid: &Grid) -> usize {
    grid.dims().iter().copied().min().unwrap_or(8) / 3
}

/// Exact shear flow `(U(x2), 0, W(x1 - t U(x2), x2))` on a 3D periodic grid.
pub fn shear_flow(
    u: impl Fn(f64) -> f64,
    w: impl Fn(f64, f64) -> f64,
    t: f64,
    grid: &Grid,
) -> Result<Snapshot> {
    if grid.ndim() != 3 || !grid.is_periodic() {
        return Err(Error::param(
            "grid",
            "shear flow needs a three-dimensional periodic grid",
        ));
    }
    let n = grid.len();
    let mut v0 = vec![0.0; n];
    let v1 = vec![0.0; n];
    let mut v2 = vec![0.0; n];
    for i in 0..n {
        let x = grid.position(i);
        let ux = u(x[1]);
        v0[i] = ux;
        v2[i] = w(x[0] - t * ux, x[1]);
    }
    let mut s = Snapshot::new(grid.clone(), vec![v0, v1, v2], t)?;
    s.tags.divergence_free = Some(DIVERGENCE_TAG_TOLERANCE);
    Ok(s)
}

/// Divergence-free random Fourier field with `|u_hat(k)| ~ |k|^-(alpha + n/2)`
/// for `0 < |m| <= cutoff` (integer mode index `m`), independent uniform phases.
///
/// Modes are drawn in a fixed lexicographic order over `[-cutoff, cutoff]^n`
/// so the same `(alpha, cutoff, seed)` gives the same continuous field on any
/// grid that resolves it.
pub fn fractional_field(alpha: f64, cutoff: usize, seed: u64, grid: &Grid) -> Result<Snapshot> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if !grid.is_periodic() {
        return Err(Error::param("grid", "fractional fields need a periodic grid"));
    }
    let min_n = grid.dims().iter().copied().min().unwrap();
    if cutoff == 0 || 2 * cutoff >= min_n {
        return Err(Error::param(
            "cutoff",
            format!("must lie in [1, {}) for this grid, got {cutoff}", min_n.div_ceil(2)),
        ));
    }
    let nd = grid.ndim();
    let k = cutoff as i64;
    let mut spec = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; nd];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = vec![-k; nd];
    loop {
        let m2: i64 = m.iter().map(|x| x * x).sum();
        if m2 > 0 && m2 <= k * k {
            let kv: Vec<f64> = (0..nd)
                .map(|a| 2.0 * PI * m[a] as f64 / grid.extent(a))
                .collect();
            let kmag = kv.iter().map(|x| x * x).sum::<f64>().sqrt();
            let amp = kmag.powf(-(alpha + nd as f64 / 2.0));
            let mut a: Vec<Complex64> = (0..nd)
                .map(|_| Complex64::from_polar(amp, rng.gen_range(0.0..2.0 * PI)))
                .collect();
            let kdota: Complex64 = (0..nd).map(|c| a[c] * kv[c]).sum();
            for c in 0..nd {
                a[c] -= kdota * kv[c] / (kmag * kmag);
            }
            let idx: Vec<usize> = (0..nd)
                .map(|ax| m[ax].rem_euclid(grid.dims()[ax] as i64) as usize)
                .collect();
            let flat = grid.flat(&idx);
            for c in 0..nd {
                spec[c][flat] += a[c];
            }
        }
        // lexicographic increment over the cube
        let mut ax = nd;
        loop {
            if ax == 0 {
                break;
            }
            ax -= 1;
            if m[ax] < k {
                m[ax] += 1;
                for r in m.iter_mut().skip(ax + 1) {
                    *r = -k;
                }
                break;
            } else if ax == 0 {
                ax = usize::MAX;
                break;
            }
        }
        if ax == usize::MAX {
            break;
        }
    }
    let total = grid.len() as f64;
    let velocity: Vec<Vec<f64>> = spec
        .into_iter()
        .map(|c| {
            spectral::inverse_real(grid, c)
                .into_iter()
                .map(|v| v * total)
                .collect()
        })
        .collect();
    let mut s = Snapshot::new(grid.clone(), velocity, 0.0)?;
    s.tags = Tags {
        divergence_free: Some(DIVERGENCE_TAG_TOLERANCE),
        seed: Some(seed),
        generator: Some(serde_json::json!({
            "kind": "fractional", "alpha": alpha, "cutoff": cutoff, "seed": seed
        })),
        ..Tags::default()
    };
    Ok(s)
}

/// Taylor–Green vortex on `[0, 2pi]^2`:
/// `u = e^{-2 nu t} (sin x cos y, -cos x sin y)`, `p = e^{-4 nu t} (cos 2x + cos 2y) / 4`.
pub fn taylor_green(grid: &Grid, t: f64, nu: f64) -> Result<Snapshot> {
    let ok = grid.ndim() == 2
        && grid.is_periodic()
        && (0..2).all(|a| (grid.extent(a) - 2.0 * PI).abs() < 1e-12);
    if !ok {
        return Err(Error::param(
            "grid",
            "Taylor-Green needs a 2D periodic grid of extent 2pi per axis",
        ));
    }
    let du = (-2.0 * nu * t).exp();
    let dp = (-4.0 * nu * t).exp();
    let n = grid.len();
    let (mut u, mut v, mut p) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let x = grid.position(i);
        u[i] = du * x[0].sin() * x[1].cos();
        v[i] = -du * x[0].cos() * x[1].sin();
        p[i] = dp * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos()) / 4.0;
    }
    let mut s = Snapshot::new(grid.clone(), vec![u, v], t)?.with_pressure(p)?;
    s.tags.divergence_free = Some(DIVERGENCE_TAG_TOLERANCE);
    s.tags.generator = Some(serde_json::json!({"kind": "taylor-green", "nu": nu, "t": t}));
    Ok(s)
}

/// `u = U 4y(L-y)/L^2 + ∂ψ/∂y`, `v = -∂ψ/∂x` with
/// `ψ = A sin(2π m x / Lx) (4y(L-y)/L^2)^2`. Both components vanish on the walls.
pub fn channel_flow(grid: &Grid, poiseuille: f64, vortex: f64, mode: u32) -> Result<Snapshot> {
    let ok = grid.ndim() == 2 && grid.kind(0) == crate::grid::AxisKind::Periodic && grid.kind(1) == crate::grid::AxisKind::Wall;
    if !ok {
        return Err(Error::param("grid", "channel flow needs a 2D grid, periodic in x and wall-bounded in y"));
    }
    if mode == 0 {
        return Err(Error::param("mode", "must be at least 1"));
    }
    let (lx, ly) = (grid.extent(0), grid.extent(1));
    let k = 2.0 * PI * mode as f64 / lx;
    let n = grid.len();
    let (mut u, mut v) = (vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let x = grid.position(i);
        let b = 4.0 * x[1] * (ly - x[1]) / (ly * ly);
        let db = 4.0 * (ly - 2.0 * x[1]) / (ly * ly);
        u[i] = poiseuille * b + vortex * (k * x[0]).sin() * 2.0 * b * db;
        v[i] = -vortex * k * (k * x[0]).cos() * b * b;
    }
    let mut s = Snapshot::new(grid.clone(), vec![u, v], 0.0)?;
    s.tags.divergence_free = Some(DIVERGENCE_TAG_TOLERANCE);
    Ok(s)
}

/// Component means, for the zero-mean invariant of the Fourier generator.
pub fn component_means(s: &Snapshot) -> Vec<f64> {
    s.velocity
        .iter()
        .map(|c| calculus::pairwise_sum(c) / c.len() as f64)
        .collect()
}

//! Local weak energy identity and its dissipation defect.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{central_derivative, pairwise_sum};
use crate::commutator::{check_ladder, SlopeFit, SpatialTest};
use crate::error::{Error, Result};
use crate::grid::{Grid, Region, Snapshot, Trajectory};
use crate::mollify::{make_mollifier, make_time_mollifier, mollify_field, Mollifier, Path, RegionChain};

/// Raised-cosine time window `(1 + cos(pi (t - c) / w)) / 2` on `|t - c| < w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub center: f64,
    pub half_width: f64,
}

impl TimeWindow {
    pub fn value(&self, t: f64) -> f64 {
        let s = (t - self.center) / self.half_width;
        if s.abs() >= 1.0 {
            0.0
        } else {
            0.5 * (1.0 + (PI * s).cos())
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let s = (t - self.center) / self.half_width;
        if s.abs() >= 1.0 {
            0.0
        } else {
            -0.5 * PI / self.half_width * (PI * s).sin()
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }
}

/// How `∂t χ` and `∇φ` are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestDerivatives {
    /// Closed-form `χ'` and the gradient carried by the spatial test (if any).
    #[default]
    Analytic,
    /// Central differences on the sampled `χ` and `φ`; makes summation by
    /// parts exact against [`dr_dissipation_field`].
    Discrete,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    pub chi: TimeWindow,
    pub phi: SpatialTest,
    pub derivatives: TestDerivatives,
}

impl TestFunction {
    pub fn new(chi: TimeWindow, phi: SpatialTest) -> Self {
        TestFunction {
            chi,
            phi,
            derivatives: TestDerivatives::Analytic,
        }
    }

    pub fn discrete(mut self) -> Self {
        self.derivatives = TestDerivatives::Discrete;
        self
    }

    fn chi_dot(&self, t: f64, dt: f64) -> f64 {
        match self.derivatives {
            TestDerivatives::Analytic => self.chi.derivative(t),
            TestDerivatives::Discrete => (self.chi.value(t + dt) - self.chi.value(t - dt)) / (2.0 * dt),
        }
    }

    fn grad_phi(&self, grid: &Grid) -> Vec<Vec<f64>> {
        match (&self.phi.grad, self.derivatives) {
            (Some(g), TestDerivatives::Analytic) => g.clone(),
            _ => (0..grid.ndim())
                .map(|a| central_derivative(grid, &self.phi.phi, a, 1))
                .collect(),
        }
    }

    fn spatial(&self) -> SpatialTest {
        match self.derivatives {
            TestDerivatives::Analytic => self.phi.clone(),
            TestDerivatives::Discrete => SpatialTest::new(self.phi.phi.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalanceReport {
    /// `∫∫ e ∂t ψ + (e + p) u · ∇ψ` of the mollified fields.
    pub lhs: f64,
    /// `-∫∫ χ R : ∇(φ u)`, the commutator flux with the sign that balances `lhs`.
    pub rhs: f64,
    pub residual: f64,
    /// Refinement estimate of the discretization error in `residual`.
    pub budget: f64,
    /// The time-derivative part of `lhs` alone.
    pub time_part: f64,
    pub epsilon: f64,
    pub kappa: f64,
}

/// Space-time mollified velocity, products and pressure at one time.
struct Smoothed {
    time: f64,
    u: Vec<Vec<f64>>,
    /// Upper-triangular products `(ui uj)`, row-major over `i <= j`.
    uu: Vec<Vec<f64>>,
    p: Option<Vec<f64>>,
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = (i.min(j), i.max(j));
    (0..a).map(|r| n - r).sum::<usize>() + (b - a)
}

fn time_smooth(traj: &Trajectory, kappa: f64) -> Result<Vec<Smoothed>> {
    let n = traj.grid().ndim();
    let raw: Vec<Smoothed> = traj
        .snapshots
        .iter()
        .map(|s| {
            let mut uu = Vec::new();
            for i in 0..n {
                for j in i..n {
                    uu.push(s.velocity[i].iter().zip(&s.velocity[j]).map(|(a, b)| a * b).collect());
                }
            }
            Smoothed {
                time: s.time,
                u: s.velocity.clone(),
                uu,
                p: s.pressure.clone(),
            }
        })
        .collect();
    if kappa == 0.0 {
        return Ok(raw);
    }
    let tm = make_time_mollifier(kappa, traj.dt)?;
    let r = tm.reach;
    if raw.len() < 2 * r + 1 {
        return Err(Error::param("kappa", "time stencil longer than the trajectory"));
    }
    let combine = |k: usize, get: &dyn Fn(&Smoothed) -> &Vec<f64>| -> Vec<f64> {
        let mut acc = vec![0.0; get(&raw[k]).len()];
        for (j, w) in tm.weights.iter().enumerate() {
            let src = get(&raw[k + j - r]);
            for (a, v) in acc.iter_mut().zip(src) {
                *a += w * tm.dt * v;
            }
        }
        acc
    };
    Ok((r..raw.len() - r)
        .map(|k| Smoothed {
            time: raw[k].time,
            u: (0..n).map(|c| combine(k, &|s: &Smoothed| &s.u[c])).collect(),
            uu: (0..raw[k].uu.len()).map(|c| combine(k, &|s: &Smoothed| &s.uu[c])).collect(),
            p: raw[k].p.as_ref().map(|_| combine(k, &|s: &Smoothed| s.p.as_ref().unwrap())),
        })
        .collect())
}

fn space_smooth(
    grid: &Grid,
    s: &Smoothed,
    moll: &Mollifier,
    region: &Region,
    valid: &Region,
) -> Result<Smoothed> {
    let m = |f: &Vec<f64>| mollify_field(grid, f, moll, region, Some(valid), Path::Direct);
    Ok(Smoothed {
        time: s.time,
        u: s.u.iter().map(m).collect::<Result<_>>()?,
        uu: s.uu.iter().map(m).collect::<Result<_>>()?,
        p: s.p.as_ref().map(m).transpose()?,
    })
}

fn check_margins(
    grid: &Grid,
    test: &TestFunction,
    epsilon: f64,
    kappa: f64,
    chain: &RegionChain,
    t_range: (f64, f64),
) -> Result<()> {
    if test.phi.phi.len() != grid.len() {
        return Err(Error::Shape("test function does not match the grid".into()));
    }
    if !test.phi.support().is_subset_of(chain.innermost()) {
        return Err(Error::param("phi", "support must lie in the innermost region of the chain"));
    }
    if epsilon > chain.eta / 2.0 * (1.0 + 1e-12) {
        return Err(Error::param("epsilon", format!("must not exceed eta/2 = {}", chain.eta / 2.0)));
    }
    let (a, b) = test.chi.support();
    if let Some(tau) = chain.tau {
        if kappa > tau / 2.0 * (1.0 + 1e-12) {
            return Err(Error::param("kappa", format!("must not exceed tau/2 = {}", tau / 2.0)));
        }
        if a < t_range.0 + 3.0 * tau - 1e-12 || b > t_range.1 - 3.0 * tau + 1e-12 {
            return Err(Error::param("chi", "time window must sit inside (t1 + 3 tau, t2 - 3 tau)"));
        }
    }
    if a < t_range.0 - 1e-12 || b > t_range.1 + 1e-12 {
        return Err(Error::param("chi", "time window leaves the mollified trajectory"));
    }
    Ok(())
}

/// Both sides of the local energy identity for the `(epsilon, kappa)`-mollified
/// trajectory. `kappa = 0` skips time mollification.
pub fn weak_energy_identity(
    traj: &Trajectory,
    test: &TestFunction,
    epsilon: f64,
    kappa: f64,
    chain: &RegionChain,
) -> Result<EnergyBalanceReport> {
    let grid = traj.grid().clone();
    if traj.snapshots.iter().any(|s| s.pressure.is_none()) {
        return Err(Error::MissingPressure);
    }
    let smoothed_t = time_smooth(traj, kappa)?;
    let t_range = (smoothed_t[0].time, smoothed_t.last().unwrap().time);
    check_margins(&grid, test, epsilon, kappa, chain, t_range)?;
    let moll = make_mollifier(epsilon, &grid)?;
    let foot = test.phi.footprint(&grid);
    let grad_phi = test.grad_phi(&grid);
    let spatial = test.spatial();
    let w = grid.quadrature_weights();
    let nodes = foot.nodes();
    let n = grid.ndim();
    let dt = traj.dt;

    let per_time = smoothed_t
        .par_iter()
        .map(|st| -> Result<[f64; 6]> {
            let chi = test.chi.value(st.time);
            let chi_dot = test.chi_dot(st.time, dt);
            if chi == 0.0 && chi_dot == 0.0 {
                return Ok([0.0; 6]);
            }
            let s = space_smooth(&grid, st, &moll, &foot, chain.outermost())?;
            let p = s.p.as_ref().unwrap();
            let mut time_terms = Vec::with_capacity(nodes.len());
            let mut flux_terms = Vec::with_capacity(nodes.len());
            // the same sums on every other node, for the quadrature budget
            let mut coarse = (Vec::new(), Vec::new());
            let coarse_w = (1u32 << n) as f64;
            for &x in &nodes {
                let e = 0.5 * s.u.iter().map(|c| c[x] * c[x]).sum::<f64>();
                let udg: f64 = (0..n).map(|a| s.u[a][x] * grad_phi[a][x]).sum();
                let (tt, ft) = (w[x] * e * chi_dot * test.phi.phi[x], w[x] * (e + p[x]) * chi * udg);
                time_terms.push(tt);
                flux_terms.push(ft);
                if grid.unravel(x)[..n].iter().all(|i| i % 2 == 0) {
                    coarse.0.push(coarse_w * tt);
                    coarse.1.push(coarse_w * ft);
                }
            }
            // commutator contraction, with step-1 and step-2 differences for the budget
            let r: Vec<Vec<f64>> = (0..n * n)
                .map(|ij| {
                    let (i, j) = (ij / n, ij % n);
                    let k = pair_index(n, i, j);
                    (0..grid.len())
                        .map(|x| s.uu[k][x] - s.u[i][x] * s.u[j][x])
                        .collect()
                })
                .collect();
            let contraction = |g: &[Vec<f64>]| -> f64 {
                let terms: Vec<f64> = nodes
                    .iter()
                    .map(|&x| w[x] * r.iter().zip(g).map(|(a, b)| a[x] * b[x]).sum::<f64>())
                    .collect();
                chi * pairwise_sum(&terms)
            };
            let g1 = spatial.grad_product(&grid, &s.u);
            let g2 = grad_product_step(&spatial, &grid, &s.u, 2);
            Ok([
                pairwise_sum(&time_terms),
                pairwise_sum(&flux_terms),
                contraction(&g1),
                contraction(&g2),
                pairwise_sum(&coarse.0),
                pairwise_sum(&coarse.1),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |k: usize| pairwise_sum(&per_time.iter().map(|r| r[k] * dt).collect::<Vec<_>>());
    let time_part = col(0);
    let lhs = time_part + col(1);
    let rhs = -col(2);
    let rhs2 = -col(3);
    let lhs_coarse = col(4) + col(5);
    let residual = lhs - rhs;
    let scale = lhs.abs().max(rhs.abs());
    Ok(EnergyBalanceReport {
        lhs,
        rhs,
        residual,
        budget: (rhs - rhs2).abs() / 3.0 + (lhs - lhs_coarse).abs() + 1e-13 * scale,
        time_part,
        epsilon,
        kappa,
    })
}

fn grad_product_step(test: &SpatialTest, grid: &Grid, w: &[Vec<f64>], step: usize) -> Vec<Vec<f64>> {
    let n = w.len();
    let mut out = Vec::with_capacity(n * n);
    for wi in w {
        match &test.grad {
            Some(g) => {
                for (j, gj) in g.iter().enumerate().take(n) {
                    let dw = central_derivative(grid, wi, j, step);
                    out.push((0..grid.len()).map(|x| gj[x] * wi[x] + test.phi[x] * dw[x]).collect());
                }
            }
            None => {
                let prod: Vec<f64> = wi.iter().zip(&test.phi).map(|(a, b)| a * b).collect();
                for j in 0..n {
                    out.push(central_derivative(grid, &prod, j, step));
                }
            }
        }
    }
    out
}

/// Defect `D = -[∂t(|u^eps|^2/2) + ∇·((|u^eps|^2/2 + p^eps) u^eps)]` on the
/// innermost region of the chain, at every snapshot with two neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct DefectField {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub region: Region,
    pub epsilon: f64,
}

impl DefectField {
    pub fn max_abs(&self) -> f64 {
        let nodes = self.region.nodes();
        self.values
            .iter()
            .flat_map(|v| nodes.iter().map(move |&x| v[x].abs()))
            .fold(0.0, f64::max)
    }

    /// `Σ_t dt Σ_x w χ φ D`.
    pub fn integrate_against(&self, grid: &Grid, test: &TestFunction, dt: f64) -> f64 {
        let w = grid.quadrature_weights();
        let nodes = self.region.nodes();
        let terms: Vec<f64> = self
            .times
            .iter()
            .zip(&self.values)
            .map(|(&t, d)| {
                let chi = test.chi.value(t);
                let inner: Vec<f64> = nodes.iter().map(|&x| w[x] * test.phi.phi[x] * d[x]).collect();
                chi * dt * pairwise_sum(&inner)
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// The defect at the snapshots as a trajectory-shaped list of snapshots.
    pub fn as_snapshots(&self, grid: &Grid) -> Result<Vec<Snapshot>> {
        self.times
            .iter()
            .zip(&self.values)
            .map(|(&t, v)| Snapshot::new(grid.clone(), vec![v.clone(); grid.ndim()], t))
            .collect()
    }
}

pub fn dr_dissipation_field(traj: &Trajectory, epsilon: f64, chain: &RegionChain) -> Result<DefectField> {
    if traj.len() < 3 {
        return Err(Error::param("trajectory", "need at least 3 snapshots for time differences"));
    }
    if traj.snapshots.iter().any(|s| s.pressure.is_none()) {
        return Err(Error::MissingPressure);
    }
    let grid = traj.grid().clone();
    let moll = make_mollifier(epsilon, &grid)?;
    let inner = chain.innermost().clone();
    let foot = inner.grow_nodes(&grid, 1);
    let n = grid.ndim();
    let smoothed = traj
        .snapshots
        .par_iter()
        .map(|s| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
            let u: Vec<Vec<f64>> = s
                .velocity
                .iter()
                .map(|c| mollify_field(&grid, c, &moll, &foot, Some(chain.outermost()), Path::Direct))
                .collect::<Result<_>>()?;
            let p = mollify_field(&grid, s.pressure.as_ref().unwrap(), &moll, &foot, Some(chain.outermost()), Path::Direct)?;
            let e: Vec<f64> = (0..grid.len())
                .map(|x| 0.5 * u.iter().map(|c| c[x] * c[x]).sum::<f64>())
                .collect();
            let flux: Vec<Vec<f64>> = (0..n)
                .map(|a| (0..grid.len()).map(|x| (e[x] + p[x]) * u[a][x]).collect())
                .collect();
            Ok((e, flux))
        })
        .collect::<Result<Vec<_>>>()?;
    let dt = traj.dt;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for k in 1..traj.len() - 1 {
        let (ref em, _) = smoothed[k - 1];
        let (ref ep, _) = smoothed[k + 1];
        let (_, ref flux) = smoothed[k];
        let mut d = vec![0.0; grid.len()];
        let divs: Vec<Vec<f64>> = (0..n).map(|a| central_derivative(&grid, &flux[a], a, 1)).collect();
        for x in inner.nodes() {
            let div: f64 = divs.iter().map(|v| v[x]).sum();
            d[x] = -((ep[x] - em[x]) / (2.0 * dt) + div);
        }
        times.push(traj.snapshots[k].time);
        values.push(d);
    }
    Ok(DefectField {
        times,
        values,
        region: inner,
        epsilon,
    })
}

/// `u^eps · (∇ · R_eps)` on the innermost region, the closed form of the
/// defect for exact Euler data.
pub fn defect_from_commutator(s: &Snapshot, epsilon: f64, chain: &RegionChain) -> Result<Vec<f64>> {
    let grid = &s.grid;
    let moll = make_mollifier(epsilon, grid)?;
    let inner = chain.innermost();
    let foot = inner.grow_nodes(grid, 1);
    let r = crate::commutator::commutator_stress(grid, &s.velocity, &moll, &foot, Some(chain.outermost()))?;
    let u: Vec<Vec<f64>> = s
        .velocity
        .iter()
        .map(|c| mollify_field(grid, c, &moll, &foot, Some(chain.outermost()), Path::Direct))
        .collect::<Result<_>>()?;
    let n = grid.ndim();
    let mut out = vec![0.0; grid.len()];
    for i in 0..n {
        for j in 0..n {
            let d = central_derivative(grid, r.get(i, j), j, 1);
            for x in inner.nodes() {
                out[x] += u[i][x] * d[x];
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub alpha: f64,
    pub reports: Vec<EnergyBalanceReport>,
    /// Fit of `|rhs|(eps)` against the predicted slope `3 alpha - 1`.
    pub fit: SlopeFit,
    pub verdict: String,
    pub positive: bool,
}

/// Commutator flux along a decreasing `epsilon` ladder and the conservation verdict.
pub fn dr_convergence_sweep(
    traj: &Trajectory,
    epsilons: &[f64],
    test: &TestFunction,
    kappa: f64,
    chain: &RegionChain,
    alpha: f64,
) -> Result<SweepReport> {
    check_ladder(traj.grid(), epsilons)?;
    let reports = epsilons
        .iter()
        .map(|&e| weak_energy_identity(traj, test, e, kappa, chain))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = reports.iter().map(|r| r.rhs.abs()).collect();
    let fit = SlopeFit::from_values("flux", epsilons, &values, 3.0 * alpha - 1.0);
    let (verdict, positive) = flux_verdict(alpha, &values, &fit);
    Ok(SweepReport {
        alpha,
        reports,
        fit,
        verdict,
        positive,
    })
}

/// Conservation verdict from a flux ladder and its fit; `true` when positive.
pub fn flux_verdict(alpha: f64, values: &[f64], fit: &SlopeFit) -> (String, bool) {
    if values.iter().all(|&v| v == 0.0) {
        return ("consistent with conservation (all fluxes vanish)".into(), true);
    }
    if alpha <= 1.0 / 3.0 {
        return (
            format!(
                "inconclusive: alpha {alpha:.3} is at or below 1/3, no conservation claim (predicted slope {:.3})",
                3.0 * alpha - 1.0
            ),
            false,
        );
    }
    let monotone = values.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    match fit.passes {
        Some(true) if monotone => (
            format!("consistent with conservation: slope {:.3} >= {:.3}", fit.slope, fit.predicted_slope - fit.tolerance),
            true,
        ),
        Some(true) => ("non-vanishing: flux not monotone in epsilon".into(), false),
        Some(false) => (
            format!("non-vanishing: slope {:.3} below {:.3}", fit.slope, fit.predicted_slope - fit.tolerance),
            false,
        ),
        None => (
            format!("inconclusive: {}", fit.note.clone().unwrap_or_default()),
            false,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::bump;
    use crate::mollify::nested_regions;
    use crate::synth::{fractional_field, taylor_green};

    fn tbox(n: usize) -> Grid {
        Grid::periodic_box(2, n, 2.0 * PI).unwrap()
    }

    fn bump_phi(g: &Grid, c: [f64; 2], r: f64) -> SpatialTest {
        let mut phi = vec![0.0; g.len()];
        let mut grad = vec![vec![0.0; g.len()]; 2];
        for i in 0..g.len() {
            let x = g.position(i);
            let d = [x[0] - c[0], x[1] - c[1]];
            let s2 = (d[0] * d[0] + d[1] * d[1]) / (r * r);
            if s2 < 1.0 {
                let b = bump(s2.sqrt());
                phi[i] = b;
                let db = b * (-2.0 / ((1.0 - s2) * (1.0 - s2))) / (r * r);
                grad[0][i] = db * d[0];
                grad[1][i] = db * d[1];
            }
        }
        SpatialTest::with_gradient(phi, grad)
    }

    fn chain_around(g: &Grid, phi: &SpatialTest, eta: f64) -> RegionChain {
        let s = phi.support().grow_nodes(g, 1);
        nested_regions(&s, eta, g, 3).unwrap()
    }

    fn steady(n: usize, count: usize, dt: f64) -> Trajectory {
        let g = tbox(n);
        Trajectory::steady(&taylor_green(&g, 0.0, 0.0).unwrap(), count, dt)
    }

    #[test]
    fn zero_field() {
        let g = tbox(64);
        let s = Snapshot::zeros(g.clone(), 0.0).with_pressure(vec![0.0; g.len()]).unwrap();
        let traj = Trajectory::steady(&s, 9, 0.1);
        let phi = bump_phi(&g, [PI, PI], 1.0);
        let chain = chain_around(&g, &phi, 0.6);
        let test = TestFunction::new(TimeWindow { center: 0.4, half_width: 0.3 }, phi);
        let r = weak_energy_identity(&traj, &test, 0.25, 0.0, &chain).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn steady_taylor_green_residual_converges() {
        let eps = 0.4;
        let mut res = Vec::new();
        for n in [64usize, 128, 256] {
            let traj = steady(n, 9, 0.1);
            let g = traj.grid().clone();
            let phi = bump_phi(&g, [2.0, 2.7], 1.3);
            let chain = chain_around(&g, &phi, 0.8);
            let test = TestFunction::new(TimeWindow { center: 0.4, half_width: 0.3 }, phi);
            let r = weak_energy_identity(&traj, &test, eps, 0.0, &chain).unwrap();
            assert!(r.residual.abs() <= 3.0 * r.budget, "{r:?}");
            res.push(r.residual.abs());
        }
        for w in res.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.7, "{res:?}");
        }
    }

    #[test]
    fn steady_taylor_green_symmetric_window() {
        // φ centred on the diagonal: Taylor-Green is odd under x <-> y
        let traj = steady(128, 9, 0.1);
        let g = traj.grid().clone();
        let h = g.max_spacing();
        let phi = bump_phi(&g, [PI / 2.0, PI / 2.0], 1.0);
        let chain = chain_around(&g, &phi, 16.0 * h);
        let test = TestFunction::new(TimeWindow { center: 0.4, half_width: 0.3 }, phi);
        let r = weak_energy_identity(&traj, &test, 8.0 * h, 0.0, &chain).unwrap();
        assert!(r.lhs.abs() <= 1e-6 && r.residual.abs() <= 1e-6, "{r:?}");
    }

    #[test]
    fn frozen_field_time_part_is_exact() {
        let g = tbox(64);
        let mut s = fractional_field(0.4, 20, 1, &g).unwrap();
        let p = crate::pressure::solve_pressure_periodic(&s).unwrap().pressure;
        s = s.with_pressure(p).unwrap();
        let traj = Trajectory::steady(&s, 17, 0.05);
        let phi = bump_phi(&g, [3.0, 3.0], 1.2);
        let chain = chain_around(&g, &phi, 0.6);
        // a window sampled by whole periods of the raised cosine sums to zero
        let test = TestFunction::new(TimeWindow { center: 0.4, half_width: 0.3 }, phi);
        let r = weak_energy_identity(&traj, &test, 0.2, 0.0, &chain).unwrap();
        assert!(r.time_part.abs() <= 1e-13, "{}", r.time_part);
    }

    #[test]
    fn gauge_and_time_reversal() {
        let g = tbox(64);
        let u0 = fractional_field(0.6, 10, 2, &g).unwrap();
        let u1 = fractional_field(0.6, 10, 3, &g).unwrap();
        let snaps: Vec<Snapshot> = (0..13)
            .map(|k| {
                let t = k as f64 * 0.1;
                let a = (1.0 - t / 1.2, t / 1.2);
                let v: Vec<Vec<f64>> = (0..2)
                    .map(|c| u0.velocity[c].iter().zip(&u1.velocity[c]).map(|(x, y)| a.0 * x + a.1 * y).collect())
                    .collect();
                let s = Snapshot::new(g.clone(), v, t).unwrap();
                let p = crate::pressure::solve_pressure_periodic(&s).unwrap().pressure;
                s.with_pressure(p).unwrap()
            })
            .collect();
        let traj = Trajectory::new(snaps.clone(), 0.1).unwrap();
        let phi = bump_phi(&g, [3.0, 3.0], 1.2);
        let chain = chain_around(&g, &phi, 0.6);
        let test = TestFunction::new(TimeWindow { center: 0.6, half_width: 0.3 }, phi);
        let base = weak_energy_identity(&traj, &test, 0.2, 0.2, &chain).unwrap();

        let shifted: Vec<Snapshot> = snaps
            .iter()
            .map(|s| {
                let mut s = s.clone();
                let p = s.pressure.as_mut().unwrap();
                for v in p.iter_mut() {
                    *v += 3.0;
                }
                let m = p.iter().sum::<f64>() / p.len() as f64;
                for v in p.iter_mut() {
                    *v -= m;
                }
                s
            })
            .collect();
        let gs = weak_energy_identity(&Trajectory::new(shifted, 0.1).unwrap(), &test, 0.2, 0.2, &chain).unwrap();
        assert!((gs.lhs - base.lhs).abs() <= 1e-12);

        let reversed: Vec<Snapshot> = snaps
            .iter()
            .rev()
            .enumerate()
            .map(|(k, s)| {
                let mut r = s.scaled(-1.0);
                r.time = k as f64 * 0.1;
                r
            })
            .collect();
        let rv = weak_energy_identity(&Trajectory::new(reversed, 0.1).unwrap(), &test, 0.2, 0.2, &chain).unwrap();
        assert!((rv.lhs + base.lhs).abs() <= 1e-12 * base.lhs.abs().max(1.0));
        assert!((rv.rhs + base.rhs).abs() <= 1e-12 * base.rhs.abs().max(1.0));
    }

    #[test]
    fn defect_matches_commutator_form_for_steady_euler() {
        let mut worst = Vec::new();
        for n in [64usize, 128] {
            let traj = steady(n, 3, 0.1);
            let g = traj.grid().clone();
            let s = Region::index_box(&g, &[n / 4, n / 4], &[n / 2, n / 2]);
            let chain = nested_regions(&s, 0.6, &g, 3).unwrap();
            let d = dr_dissipation_field(&traj, 0.3, &chain).unwrap();
            let c = defect_from_commutator(&traj.snapshots[1], 0.3, &chain).unwrap();
            let m = chain
                .innermost()
                .nodes()
                .into_iter()
                .map(|x| (d.values[0][x] - c[x]).abs())
                .fold(0.0, f64::max);
            worst.push(m);
        }
        assert!(worst[1] <= 2e-3, "{worst:?}");
        assert!((worst[0] / worst[1]).log2() >= 1.7, "{worst:?}");
    }

    #[test]
    fn constant_field_has_no_defect() {
        let g = tbox(64);
        let s = Snapshot::new(g.clone(), vec![vec![0.4; g.len()], vec![-1.1; g.len()]], 0.0)
            .unwrap()
            .with_pressure(vec![0.0; g.len()])
            .unwrap();
        let traj = Trajectory::steady(&s, 4, 0.1);
        let sup = Region::index_box(&g, &[24, 24], &[40, 40]);
        let chain = nested_regions(&sup, 0.5, &g, 3).unwrap();
        assert!(dr_dissipation_field(&traj, 0.25, &chain).unwrap().max_abs() <= 1e-14);
    }

    #[test]
    fn defect_integrates_to_weak_lhs() {
        let g = tbox(64);
        let snaps: Vec<Snapshot> = (0..13)
            .map(|k| {
                let t = k as f64 * 0.05;
                let s = fractional_field(0.5, 12, 4, &g).unwrap().scaled(1.0 + t);
                let mut s = Snapshot::new(g.clone(), s.velocity, t).unwrap();
                let p = crate::pressure::solve_pressure_periodic(&s).unwrap().pressure;
                s = s.with_pressure(p).unwrap();
                s
            })
            .collect();
        let traj = Trajectory::new(snaps, 0.05).unwrap();
        let phi = bump_phi(&g, [3.0, 3.0], 1.0);
        let chain = chain_around(&g, &phi, 0.5);
        let test = TestFunction::new(TimeWindow { center: 0.3, half_width: 0.2 }, phi).discrete();
        let w = weak_energy_identity(&traj, &test, 0.2, 0.0, &chain).unwrap();
        let d = dr_dissipation_field(&traj, 0.2, &chain).unwrap();
        let integral = d.integrate_against(&g, &test, traj.dt);
        assert!((integral - w.lhs).abs() <= 1e-10, "{integral} vs {}", w.lhs);
    }

    #[test]
    fn sweep_verdicts() {
        let traj = steady(128, 9, 0.1);
        let g = traj.grid().clone();
        let h = g.max_spacing();
        let phi = bump_phi(&g, [2.0, 2.7], 1.3);
        let chain = chain_around(&g, &phi, 32.0 * h);
        let test = TestFunction::new(TimeWindow { center: 0.4, half_width: 0.3 }, phi.clone());
        let eps = [16.0 * h, 11.3 * h, 8.0 * h, 5.66 * h, 4.0 * h];
        let r = dr_convergence_sweep(&traj, &eps, &test, 0.0, &chain, 1.0).unwrap();
        assert!(r.positive && r.fit.slope >= 1.8, "{:?}", r.fit);

        let z = Snapshot::zeros(g.clone(), 0.0).with_pressure(vec![0.0; g.len()]).unwrap();
        let zt = Trajectory::steady(&z, 9, 0.1);
        let r = dr_convergence_sweep(&zt, &eps, &test, 0.0, &chain, 1.0).unwrap();
        assert!(r.positive);

        let mut f = fractional_field(0.25, 42, 7, &g).unwrap();
        let p = crate::pressure::solve_pressure_periodic(&f).unwrap().pressure;
        f = f.with_pressure(p).unwrap();
        let ft = Trajectory::steady(&f, 9, 0.1);
        let r = dr_convergence_sweep(&ft, &eps, &test, 0.0, &chain, 0.25).unwrap();
        assert!(!r.positive && r.verdict.starts_with("inconclusive"), "{}", r.verdict);
    }
}

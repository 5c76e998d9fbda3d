//! The commutator stress `R_eps = (u⊗u)^eps - u^eps⊗u^eps`, its increment
//! form, the flux `∫χ R_eps : ∇(φ u^eps)` and log-log scaling probes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{central_derivative, pairwise_sum};
use crate::error::{Error, Result};
use crate::fit::loglog_fit;
use crate::grid::{Grid, Region, Snapshot, Trajectory};
use crate::mollify::{make_mollifier, mollify_field, mollify_vector, Mollifier, Path};

/// Slope tolerance for every scaling assertion.
pub const SLOPE_TOLERANCE: f64 = 0.15;
/// Minimum coefficient of determination before a slope is asserted.
pub const R2_GATE: f64 = 0.9;

/// Symmetric tensor field stored row-major (`entries[i * n + j]`).
#[derive(Clone, Debug, PartialEq)]
pub struct CommutatorStress {
    pub entries: Vec<Vec<f64>>,
    pub ndim: usize,
    pub epsilon: f64,
    pub region: Region,
}

impl CommutatorStress {
    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        &self.entries[i * self.ndim + j]
    }

    /// Pointwise Frobenius norm.
    pub fn frobenius(&self) -> Vec<f64> {
        let len = self.entries[0].len();
        (0..len)
            .map(|x| self.entries.iter().map(|e| e[x] * e[x]).sum::<f64>().sqrt())
            .collect()
    }

    /// Largest pointwise Frobenius norm over the region.
    pub fn sup(&self) -> f64 {
        let f = self.frobenius();
        self.region.nodes().into_iter().fold(0.0f64, |m, x| m.max(f[x]))
    }

    fn symmetric(ndim: usize, epsilon: f64, region: Region, mut f: impl FnMut(usize, usize) -> Vec<f64>) -> Self {
        let mut entries = vec![Vec::new(); ndim * ndim];
        for i in 0..ndim {
            for j in i..ndim {
                let v = f(i, j);
                if i != j {
                    entries[j * ndim + i] = v.clone();
                }
                entries[i * ndim + j] = v;
            }
        }
        CommutatorStress {
            entries,
            ndim,
            epsilon,
            region,
        }
    }
}

/// `(u⊗u)^eps - u^eps⊗u^eps` on `region`, mollifying each product directly.
pub fn commutator_stress(
    grid: &Grid,
    u: &[Vec<f64>],
    moll: &Mollifier,
    region: &Region,
    valid: Option<&Region>,
) -> Result<CommutatorStress> {
    let ue = mollify_vector(grid, u, moll, region, valid, Path::Auto)?;
    let n = u.len();
    let mut err = None;
    let r = CommutatorStress::symmetric(n, moll.epsilon, region.clone(), |i, j| {
        let prod: Vec<f64> = u[i].iter().zip(&u[j]).map(|(a, b)| a * b).collect();
        match mollify_field(grid, &prod, moll, region, valid, Path::Auto) {
            Ok(m) => m
                .iter()
                .zip(&ue[i])
                .zip(&ue[j])
                .map(|((p, a), b)| p - a * b)
                .collect(),
            Err(e) => {
                err = Some(e);
                Vec::new()
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(r),
    }
}

/// The two terms of the increment form: `∫ρ δu⊗δu` and `(u - u^eps)⊗(u - u^eps)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementForm {
    pub stress: CommutatorStress,
    pub increment_term: CommutatorStress,
    pub reynolds_term: CommutatorStress,
}

/// `R_eps = Σ ρ(y) h^n δ_y u ⊗ δ_y u - (u - u^eps)⊗(u - u^eps)` with
/// `δ_y u(x) = u(x + y) - u(x)`; algebraically equal to [`commutator_stress`].
pub fn commutator_via_increments(
    grid: &Grid,
    u: &[Vec<f64>],
    moll: &Mollifier,
    region: &Region,
    valid: Option<&Region>,
) -> Result<IncrementForm> {
    let ue = mollify_vector(grid, u, moll, region, valid, Path::Direct)?;
    let n = u.len();
    let scaled: Vec<f64> = moll.weights.iter().map(|w| w * moll.cell_volume).collect();
    let len = grid.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let inc: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(i, j)| {
            (0..len)
                .into_par_iter()
                .map(|x| {
                    if !region.contains(x) {
                        return 0.0;
                    }
                    let mut s = 0.0;
                    for (o, w) in moll.offsets.iter().zip(&scaled) {
                        let y = grid.offset(x, o).expect("margin checked");
                        s += w * (u[i][y] - u[i][x]) * (u[j][y] - u[j][x]);
                    }
                    s
                })
                .collect()
        })
        .collect();
    let lookup = |i: usize, j: usize| pairs.iter().position(|&p| p == (i.min(j), i.max(j))).unwrap();
    let rey = |i: usize, j: usize| -> Vec<f64> {
        (0..len)
            .map(|x| {
                if region.contains(x) {
                    (u[i][x] - ue[i][x]) * (u[j][x] - ue[j][x])
                } else {
                    0.0
                }
            })
            .collect()
    };
    let increment_term =
        CommutatorStress::symmetric(n, moll.epsilon, region.clone(), |i, j| inc[lookup(i, j)].clone());
    let reynolds_term = CommutatorStress::symmetric(n, moll.epsilon, region.clone(), rey);
    let stress = CommutatorStress::symmetric(n, moll.epsilon, region.clone(), |i, j| {
        increment_term
            .get(i, j)
            .iter()
            .zip(reynolds_term.get(i, j))
            .map(|(a, b)| a - b)
            .collect()
    });
    Ok(IncrementForm {
        stress,
        increment_term,
        reynolds_term,
    })
}

/// Spatial test function with optional analytic gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialTest {
    pub phi: Vec<f64>,
    pub grad: Option<Vec<Vec<f64>>>,
}

impl SpatialTest {
    pub fn new(phi: Vec<f64>) -> Self {
        SpatialTest { phi, grad: None }
    }

    pub fn with_gradient(phi: Vec<f64>, grad: Vec<Vec<f64>>) -> Self {
        SpatialTest {
            phi,
            grad: Some(grad),
        }
    }

    pub fn support(&self) -> Region {
        Region::from_mask(self.phi.iter().map(|&v| v != 0.0).collect())
    }

    /// Support grown by one node, where `∇(φ w)` can be nonzero.
    pub fn footprint(&self, grid: &Grid) -> Region {
        self.support().grow_nodes(grid, 1)
    }

    /// `∂_j (φ w_i)` for every `i, j`, row-major.
    pub fn grad_product(&self, grid: &Grid, w: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = w.len();
        let mut out = Vec::with_capacity(n * n);
        for wi in w {
            match &self.grad {
                Some(g) => {
                    for (j, gj) in g.iter().enumerate().take(n) {
                        let dw = central_derivative(grid, wi, j, 1);
                        out.push(
                            (0..grid.len())
                                .map(|x| gj[x] * wi[x] + self.phi[x] * dw[x])
                                .collect(),
                        );
                    }
                }
                None => {
                    let prod: Vec<f64> = wi.iter().zip(&self.phi).map(|(a, b)| a * b).collect();
                    for j in 0..n {
                        out.push(central_derivative(grid, &prod, j, 1));
                    }
                }
            }
        }
        out
    }
}

/// Radial bump `φ(|x - c| / r)` with its analytic gradient; periodic axes use the nearest image.
pub fn radial_bump(grid: &Grid, center: &[f64], radius: f64) -> Result<SpatialTest> {
    let nd = grid.ndim();
    if center.len() != nd {
        return Err(Error::param("center", format!("need {nd} coordinates, got {}", center.len())));
    }
    if !(radius > 0.0) {
        return Err(Error::param("radius", "must be positive"));
    }
    let mut phi = vec![0.0; grid.len()];
    let mut grad = vec![vec![0.0; grid.len()]; nd];
    for i in 0..grid.len() {
        let x = grid.position(i);
        let mut d = [0.0; 3];
        for a in 0..nd {
            d[a] = x[a] - center[a];
            if grid.kind(a) == crate::grid::AxisKind::Periodic {
                let l = grid.extent(a);
                d[a] -= l * (d[a] / l).round();
            }
        }
        let s2 = d.iter().map(|v| v * v).sum::<f64>() / (radius * radius);
        if s2 < 1.0 {
            let b = crate::bump::bump(s2.sqrt());
            phi[i] = b;
            let db = b * (-2.0 / ((1.0 - s2) * (1.0 - s2))) / (radius * radius);
            for a in 0..nd {
                grad[a][i] = db * d[a];
            }
        }
    }
    Ok(SpatialTest::with_gradient(phi, grad))
}

/// Pieces of one spatial flux evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxSample {
    pub flux: f64,
    pub sup_stress: f64,
    pub sup_grad: f64,
}

/// `∫ R_eps : ∇(φ u^eps) dx` for one snapshot.
pub fn flux_density_integral(
    grid: &Grid,
    u: &[Vec<f64>],
    moll: &Mollifier,
    test: &SpatialTest,
    valid: Option<&Region>,
) -> Result<FluxSample> {
    let region = test.footprint(grid);
    let r = commutator_stress(grid, u, moll, &region, valid)?;
    let ue = mollify_vector(grid, u, moll, &region, valid, Path::Auto)?;
    let g = test.grad_product(grid, &ue);
    let w = grid.quadrature_weights();
    let nodes = region.nodes();
    let terms: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let c: f64 = r.entries.iter().zip(&g).map(|(a, b)| a[x] * b[x]).sum();
            c * w[x]
        })
        .collect();
    let sup_grad = nodes.iter().fold(0.0f64, |m, &x| {
        m.max(g.iter().map(|e| e[x] * e[x]).sum::<f64>().sqrt())
    });
    Ok(FluxSample {
        flux: pairwise_sum(&terms),
        sup_stress: r.sup(),
        sup_grad,
    })
}

/// `∫ χ(t) ∫ R_eps : ∇(φ u^eps) dx dt`, with `chi[k]` the weight of snapshot `k`
/// (the time step is applied here).
pub fn flux_term(
    traj: &Trajectory,
    epsilon: f64,
    chi: &[f64],
    test: &SpatialTest,
    valid: Option<&Region>,
) -> Result<f64> {
    if chi.len() != traj.len() {
        return Err(Error::Shape("one time weight per snapshot".into()));
    }
    if chi.iter().any(|&c| c < 0.0) {
        return Err(Error::param("chi", "time weights must be nonnegative"));
    }
    let grid = traj.grid();
    let moll = make_mollifier(epsilon, grid)?;
    let mut terms = Vec::new();
    for (s, &c) in traj.snapshots.iter().zip(chi) {
        if c == 0.0 {
            continue;
        }
        let f = flux_density_integral(grid, &s.velocity, &moll, test, valid)?;
        terms.push(c * traj.dt * f.flux);
    }
    Ok(pairwise_sum(&terms))
}

/// Log-log fit of a probed quantity against the kernel radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub quantity: String,
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub r2: f64,
    pub predicted_slope: f64,
    pub tolerance: f64,
    /// `Some(slope >= predicted - tolerance)` when `r2 >= 0.9`; `None` otherwise
    /// (or when every value vanished).
    pub passes: Option<bool>,
    pub note: Option<String>,
}

impl SlopeFit {
    pub fn from_values(quantity: &str, epsilons: &[f64], values: &[f64], predicted: f64) -> SlopeFit {
        let mut fit = SlopeFit {
            quantity: quantity.to_string(),
            epsilons: epsilons.to_vec(),
            values: values.to_vec(),
            slope: f64::NAN,
            r2: f64::NAN,
            predicted_slope: predicted,
            tolerance: SLOPE_TOLERANCE,
            passes: None,
            note: None,
        };
        if values.iter().all(|&v| v == 0.0) {
            fit.note = Some("all values vanish".into());
            return fit;
        }
        match loglog_fit(epsilons, values) {
            Some(f) => {
                fit.slope = f.slope;
                fit.r2 = f.r2;
                if f.r2 >= R2_GATE {
                    fit.passes = Some(f.slope >= predicted - SLOPE_TOLERANCE);
                } else {
                    fit.note = Some(format!("r2 {:.3} below gate {R2_GATE}; slope not asserted", f.r2));
                }
            }
            None => fit.note = Some("some values vanish; no log-log fit".into()),
        }
        fit
    }
}

/// Checks a kernel-radius ladder: strictly decreasing, each >= 2h, >= 4 rungs.
pub fn check_ladder(grid: &Grid, epsilons: &[f64]) -> Result<()> {
    if epsilons.len() < 4 {
        return Err(Error::TooFewRungs {
            got: epsilons.len(),
            need: 4,
        });
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("epsilons", "ladder must be strictly decreasing"));
    }
    let floor = 2.0 * grid.max_spacing();
    if let Some(&e) = epsilons.iter().find(|&&e| e < floor * (1.0 - 1e-12)) {
        return Err(Error::UnderResolved { radius: e, floor });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingProbe {
    pub alpha: f64,
    /// `|flux|`, predicted slope `3 alpha - 1`.
    pub flux: SlopeFit,
    /// `sup |R_eps|`, predicted `2 alpha`.
    pub sup_stress: SlopeFit,
    /// `sup |∇(φ u^eps)|`, predicted `alpha - 1`.
    pub sup_grad: SlopeFit,
}

/// Evaluates flux, stress and gradient sizes along an `epsilon` ladder.
pub fn scaling_probe(
    traj: &Trajectory,
    alpha: f64,
    epsilons: &[f64],
    chi: &[f64],
    test: &SpatialTest,
    valid: Option<&Region>,
) -> Result<ScalingProbe> {
    let grid = traj.grid();
    check_ladder(grid, epsilons)?;
    if chi.len() != traj.len() {
        return Err(Error::Shape("one time weight per snapshot".into()));
    }
    let rows = epsilons
        .par_iter()
        .map(|&eps| -> Result<(f64, f64, f64)> {
            let moll = make_mollifier(eps, grid)?;
            let mut flux = Vec::new();
            let (mut sr, mut sg) = (0.0f64, 0.0f64);
            for (s, &c) in traj.snapshots.iter().zip(chi) {
                if c == 0.0 {
                    continue;
                }
                let f = flux_density_integral(grid, &s.velocity, &moll, test, valid)?;
                flux.push(c * traj.dt * f.flux);
                sr = sr.max(f.sup_stress);
                sg = sg.max(f.sup_grad);
            }
            Ok((pairwise_sum(&flux).abs(), sr, sg))
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |k: usize| -> Vec<f64> {
        rows.iter()
            .map(|r| match k {
                0 => r.0,
                1 => r.1,
                _ => r.2,
            })
            .collect()
    };
    Ok(ScalingProbe {
        alpha,
        flux: SlopeFit::from_values("flux", epsilons, &col(0), 3.0 * alpha - 1.0),
        sup_stress: SlopeFit::from_values("sup_R", epsilons, &col(1), 2.0 * alpha),
        sup_grad: SlopeFit::from_values("sup_grad", epsilons, &col(2), alpha - 1.0),
    })
}

/// Single-snapshot convenience for [`scaling_probe`] (χ ≡ 1, unit time weight).
pub fn scaling_probe_snapshot(
    s: &Snapshot,
    alpha: f64,
    epsilons: &[f64],
    test: &SpatialTest,
    valid: Option<&Region>,
) -> Result<ScalingProbe> {
    let traj = Trajectory::new(vec![s.clone()], 1.0)?;
    scaling_probe(&traj, alpha, epsilons, &[1.0], test, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::bump;
    use crate::calculus::max_abs;
    use crate::synth::{fractional_field, taylor_green};
    use std::f64::consts::PI;

    fn tbox(n: usize) -> Grid {
        Grid::periodic_box(2, n, 2.0 * PI).unwrap()
    }

    /// Radial bump of radius `r` about `c`, with its analytic gradient.
    #[test]
    fn radial_bump_matches_local_bump() {
        let g = tbox(32);
        let a = radial_bump(&g, &[PI, PI], 1.5).unwrap();
        let b = bump_test(&g, [PI, PI], 1.5);
        assert_eq!(a, b);
        let w = radial_bump(&g, &[0.0, 0.0], 1.0).unwrap();
        assert!(w.phi[g.flat(&[g.dims()[0] - 1, 0])] > 0.0);
        assert!(radial_bump(&g, &[0.0], 1.0).is_err());
    }

    pub(crate) fn bump_test(g: &Grid, c: [f64; 2], r: f64) -> SpatialTest {
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

    #[test]
    fn constant_field_has_no_stress() {
        let g = tbox(32);
        let m = make_mollifier(3.0 * g.max_spacing(), &g).unwrap();
        let u = vec![vec![1.3; g.len()], vec![-0.4; g.len()]];
        let full = Region::full(&g);
        let r = commutator_stress(&g, &u, &m, &full, None).unwrap();
        assert!(r.entries.iter().all(|e| max_abs(e) <= 1e-14));
        let inc = commutator_via_increments(&g, &u, &m, &full, None).unwrap();
        assert!(inc.increment_term.entries.iter().all(|e| max_abs(e) <= 1e-14));
        assert!(inc.reynolds_term.entries.iter().all(|e| max_abs(e) <= 1e-14));
    }

    #[test]
    fn linear_field_gives_second_moment() {
        let g = Grid::channel(&[32, 33], &[1.0, 1.0], 1).unwrap();
        let h = g.max_spacing();
        let m = make_mollifier(4.0 * h, &g).unwrap();
        let u: Vec<Vec<f64>> = vec![
            (0..g.len()).map(|i| g.position(i)[1]).collect(),
            (0..g.len()).map(|i| -2.0 * g.position(i)[1] + 0.3).collect(),
        ];
        // u depends only on y: R = M_yy * (1, -2)⊗(1, -2), M_yy the kernel second moment
        let myy: f64 = m
            .offsets
            .iter()
            .zip(&m.weights)
            .map(|(o, w)| w * m.cell_volume * (o[1] as f64 * h).powi(2))
            .sum();
        let region = Region::interior(&g, 4.0 * h);
        let r = commutator_stress(&g, &u, &m, &region, None).unwrap();
        let a = [1.0, -2.0];
        for x in region.nodes() {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((r.get(i, j)[x] - myy * a[i] * a[j]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_mode_against_dense_sum() {
        let g = tbox(32);
        let m = make_mollifier(3.0 * g.max_spacing(), &g).unwrap();
        let u: Vec<Vec<f64>> = vec![
            (0..g.len()).map(|i| (g.position(i)[1] * 2.0).sin()).collect(),
            (0..g.len()).map(|i| (g.position(i)[0] * 3.0).cos()).collect(),
        ];
        let full = Region::full(&g);
        let r = commutator_stress(&g, &u, &m, &full, None).unwrap();
        // every kernel node against every grid node, written out
        for x in (0..g.len()).step_by(37) {
            let mut uu = [[0.0; 2]; 2];
            let mut ue = [0.0; 2];
            for y in 0..g.len() {
                let d = g.displacement(x, y);
                let k = m.offsets.iter().position(|o| {
                    (o[0] as f64 * g.spacing()[0] - d[0]).abs() < 1e-12
                        && (o[1] as f64 * g.spacing()[1] - d[1]).abs() < 1e-12
                });
                if let Some(k) = k {
                    let w = m.weights[k] * m.cell_volume;
                    for i in 0..2 {
                        ue[i] += w * u[i][y];
                        for j in 0..2 {
                            uu[i][j] += w * u[i][y] * u[j][y];
                        }
                    }
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    assert!((r.get(i, j)[x] - (uu[i][j] - ue[i] * ue[j])).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn increment_path_matches_direct() {
        let g = tbox(64);
        let s = fractional_field(0.4, 20, 5, &g).unwrap();
        let m = make_mollifier(8.0 * g.max_spacing(), &g).unwrap();
        let full = Region::full(&g);
        let a = commutator_stress(&g, &s.velocity, &m, &full, None).unwrap();
        let b = commutator_via_increments(&g, &s.velocity, &m, &full, None).unwrap();
        for (x, y) in a.entries.iter().zip(&b.stress.entries) {
            let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
            assert!(max_abs(&d) <= 1e-12);
        }
        assert!(max_abs(b.increment_term.get(0, 0)) > 1e-3);
        assert!(max_abs(b.reynolds_term.get(0, 0)) > 1e-3);
        assert_eq!(a.get(0, 1), a.get(1, 0));
    }

    #[test]
    fn translation_and_scaling() {
        let g = tbox(32);
        let s = fractional_field(0.5, 8, 2, &g).unwrap();
        let m = make_mollifier(3.0 * g.max_spacing(), &g).unwrap();
        let full = Region::full(&g);
        let base = commutator_stress(&g, &s.velocity, &m, &full, None).unwrap();
        let shifted: Vec<Vec<f64>> = s
            .velocity
            .iter()
            .map(|c| (0..g.len()).map(|x| c[g.offset(x, &[3, -5]).unwrap()]).collect())
            .collect();
        let sh = commutator_stress(&g, &shifted, &m, &full, None).unwrap();
        for x in 0..g.len() {
            let y = g.offset(x, &[3, -5]).unwrap();
            assert!((sh.get(0, 1)[x] - base.get(0, 1)[y]).abs() <= 1e-14);
        }
        let lam = 1.7;
        let scaled: Vec<Vec<f64>> = s.velocity.iter().map(|c| c.iter().map(|v| lam * v).collect()).collect();
        let sc = commutator_stress(&g, &scaled, &m, &full, None).unwrap();
        for x in 0..g.len() {
            assert!((sc.get(0, 0)[x] - lam * lam * base.get(0, 0)[x]).abs() <= 1e-12);
        }
    }

    #[test]
    fn flux_parity_and_scaling() {
        let g = tbox(64);
        let s = fractional_field(0.5, 15, 9, &g).unwrap();
        let test = bump_test(&g, [2.5, 3.5], 1.5);
        let traj = Trajectory::new(vec![s.clone()], 1.0).unwrap();
        let eps = 4.0 * g.max_spacing();
        let f = flux_term(&traj, eps, &[1.0], &test, None).unwrap();
        let neg = Trajectory::new(vec![s.scaled(-1.0)], 1.0).unwrap();
        let fneg = flux_term(&neg, eps, &[1.0], &test, None).unwrap();
        assert!((f + fneg).abs() <= 1e-12 * f.abs().max(1.0));
        let big = Trajectory::new(vec![s.scaled(2.0)], 1.0).unwrap();
        let fb = flux_term(&big, eps, &[1.0], &test, None).unwrap();
        assert!((fb - 8.0 * f).abs() <= 1e-12 * fb.abs().max(1.0));
        let c = Snapshot::new(g.clone(), vec![vec![0.7; g.len()], vec![0.2; g.len()]], 0.0).unwrap();
        let ct = Trajectory::new(vec![c], 1.0).unwrap();
        assert!(flux_term(&ct, eps, &[1.0], &test, None).unwrap().abs() <= 1e-14);
    }

    #[test]
    fn ladder_rules() {
        let g = tbox(64);
        let h = g.max_spacing();
        assert!(matches!(check_ladder(&g, &[8.0 * h, 4.0 * h, 2.0 * h]), Err(Error::TooFewRungs { .. })));
        assert!(check_ladder(&g, &[8.0 * h, 4.0 * h, 6.0 * h, 2.0 * h]).is_err());
        assert!(check_ladder(&g, &[8.0 * h, 4.0 * h, 3.0 * h, 1.0 * h]).is_err());
        assert!(check_ladder(&g, &[8.0 * h, 4.0 * h, 3.0 * h, 2.0 * h]).is_ok());
    }

    #[test]
    fn taylor_green_flux_decays() {
        let g = tbox(128);
        let s = taylor_green(&g, 0.0, 0.0).unwrap();
        let test = bump_test(&g, [2.0, 2.6], 1.6);
        let h = g.max_spacing();
        let eps = [16.0 * h, 11.3 * h, 8.0 * h, 5.66 * h, 4.0 * h];
        let p = scaling_probe_snapshot(&s, 1.0, &eps, &test, None).unwrap();
        for w in p.flux.values.windows(2) {
            assert!(w[1] < w[0], "{:?}", p.flux.values);
        }
        assert!(p.flux.slope >= 1.8 && p.flux.r2 >= 0.95, "{:?}", p.flux);
        assert_eq!(p.flux.passes, Some(true));
    }

    #[test]
    fn fractional_sup_slopes() {
        let g = tbox(256);
        let s = fractional_field(0.4, 85, 7, &g).unwrap();
        let test = bump_test(&g, [PI, PI], 2.0);
        let h = g.max_spacing();
        let eps = [32.0 * h, 16.0 * h, 8.0 * h, 4.0 * h];
        let p = scaling_probe_snapshot(&s, 0.4, &eps, &test, None).unwrap();
        assert!(p.sup_stress.slope >= 0.65, "{:?}", p.sup_stress);
        assert!(p.sup_grad.slope >= -0.75, "{:?}", p.sup_grad);
    }
}

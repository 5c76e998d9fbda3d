//! Differential and integral calculus on node-collocated fields.

use crate::grid::{AxisKind, Grid, Region, Snapshot};
use crate::spectral;

/// Pairwise (tree) summation. The result depends only on the input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if v.len() <= BLOCK {
        let mut s = 0.0;
        for &x in v {
            s += x;
        }
        return s;
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Trapezoid integral of a scalar field over the whole grid.
pub fn integrate(grid: &Grid, f: &[f64]) -> f64 {
    let w = grid.quadrature_weights();
    let terms: Vec<f64> = f.iter().zip(&w).map(|(a, b)| a * b).collect();
    pairwise_sum(&terms)
}

/// Trapezoid integral restricted to the nodes of `region`.
pub fn integrate_region(grid: &Grid, f: &[f64], region: &Region) -> f64 {
    let w = grid.quadrature_weights();
    let terms: Vec<f64> = region.nodes().into_iter().map(|i| f[i] * w[i]).collect();
    pairwise_sum(&terms)
}

/// First derivative: spectral along periodic axes; second-order central
/// differences with one-sided second-order closure at walls otherwise.
pub fn derivative(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    match grid.kind(axis) {
        AxisKind::Periodic => spectral::derivative_periodic(grid, f, axis),
        AxisKind::Wall => central_derivative(grid, f, axis, 1),
    }
}

/// Central difference with a stencil of `step` nodes on each side. On wall
/// axes, nodes closer than `step` to a wall use the one-sided second-order
/// formula.
pub fn central_derivative(grid: &Grid, f: &[f64], axis: usize, step: usize) -> Vec<f64> {
    let h = grid.spacing()[axis] * step as f64;
    let s = step as i64;
    (0..grid.len())
        .map(|i| {
            match (grid.shift(i, axis, s), grid.shift(i, axis, -s)) {
                (Some(p), Some(m)) => (f[p] - f[m]) / (2.0 * h),
                (Some(p), None) => {
                    let p2 = grid.shift(i, axis, 2 * s).expect("grid too short for closure");
                    (-3.0 * f[i] + 4.0 * f[p] - f[p2]) / (2.0 * h)
                }
                (None, Some(m)) => {
                    let m2 = grid.shift(i, axis, -2 * s).expect("grid too short for closure");
                    (3.0 * f[i] - 4.0 * f[m] + f[m2]) / (2.0 * h)
                }
                (None, None) => unreachable!("axis shorter than the stencil"),
            }
        })
        .collect()
}

/// Discrete divergence of the velocity.
pub fn divergence(snapshot: &Snapshot) -> Vec<f64> {
    let g = &snapshot.grid;
    let mut div = vec![0.0; g.len()];
    for (a, comp) in snapshot.velocity.iter().enumerate() {
        let d = derivative(g, comp, a);
        for (o, x) in div.iter_mut().zip(d) {
            *o += x;
        }
    }
    div
}

pub fn max_abs(f: &[f64]) -> f64 {
    f.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Kinetic energy `1/2 |u|^2` integrated with the trapezoid rule.
pub fn energy(snapshot: &Snapshot) -> f64 {
    let e = kinetic_density(&snapshot.velocity);
    integrate(&snapshot.grid, &e)
}

/// Pointwise `|u|^2 / 2`.
pub fn kinetic_density(velocity: &[Vec<f64>]) -> Vec<f64> {
    let n = velocity[0].len();
    (0..n)
        .map(|i| 0.5 * velocity.iter().map(|c| c[i] * c[i]).sum::<f64>())
        .collect()
}

/// Snapshot with axes permuted (new axis `a` is old `perm[a]`), velocity
/// components relabelled consistently.
pub fn permute_snapshot(s: &Snapshot, perm: &[usize]) -> Snapshot {
    let g = &s.grid;
    let ng = g.permuted(perm);
    let remap = |f: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for (old, &v) in f.iter().enumerate() {
            let idx = g.unravel(old);
            let new_idx: Vec<usize> = perm.iter().map(|&p| idx[p]).collect();
            out[ng.flat(&new_idx)] = v;
        }
        out
    };
    let velocity = perm.iter().map(|&p| remap(&s.velocity[p])).collect();
    let pressure = s.pressure.as_deref().map(remap);
    Snapshot {
        grid: ng,
        velocity,
        pressure,
        time: s.time,
        tags: s.tags.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::PI;

    #[test]
    fn constant_field_has_zero_divergence() {
        let g = Grid::periodic_box(2, 16, 1.0).unwrap();
        let s = Snapshot::new(g.clone(), vec![vec![1.3; g.len()], vec![-0.2; g.len()]], 0.0).unwrap();
        assert!(max_abs(&divergence(&s)) <= 1e-14);
    }

    #[test]
    fn cellular_field_is_divergence_free() {
        let g = Grid::periodic_box(2, 64, 2.0 * PI).unwrap();
        let (u, v): (Vec<f64>, Vec<f64>) = (0..g.len())
            .map(|i| {
                let x = g.position(i);
                (x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin())
            })
            .unzip();
        let s = Snapshot::new(g, vec![u, v], 0.0).unwrap();
        assert!(max_abs(&divergence(&s)) <= 1e-12);
    }

    #[test]
    fn linear_field_on_channel() {
        // walls on axis 0 so the linear coordinate is not periodic
        let g = Grid::channel(&[17, 16], &[1.0, 1.0], 0).unwrap();
        let u: Vec<f64> = (0..g.len()).map(|i| g.position(i)[0]).collect();
        let s = Snapshot::new(g.clone(), vec![u, vec![0.0; g.len()]], 0.0).unwrap();
        let div = divergence(&s);
        for d in div {
            assert!((d - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn energy_examples() {
        let g = Grid::periodic_box(2, 16, 1.0).unwrap();
        let s = Snapshot::new(g.clone(), vec![vec![1.0; g.len()], vec![0.0; g.len()]], 0.0).unwrap();
        assert!((energy(&s) - 0.5).abs() < 1e-14);

        let g = Grid::periodic_box(2, 32, 2.0 * PI).unwrap();
        let u: Vec<f64> = (0..g.len()).map(|i| g.position(i)[0].sin()).collect();
        let s = Snapshot::new(g.clone(), vec![u, vec![0.0; g.len()]], 0.0).unwrap();
        // 1/2 * int sin^2 x dx dy = 1/2 * pi * 2 pi
        assert!((energy(&s) - PI * PI).abs() < 1e-12);
    }

    #[test]
    fn energy_channel_half_weights() {
        let g = Grid::channel(&[8, 9], &[1.0, 1.0], 1).unwrap();
        let s = Snapshot::new(g.clone(), vec![vec![1.0; g.len()], vec![0.0; g.len()]], 0.0).unwrap();
        assert!((energy(&s) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn energy_invariant_under_axis_permutation() {
        let g = Grid::new(&[16, 12, 10], &[1.0, 2.0, 3.0], &[AxisKind::Periodic; 3]).unwrap();
        let vel: Vec<Vec<f64>> = (0..3)
            .map(|c| {
                (0..g.len())
                    .map(|i| {
                        let x = g.position(i);
                        ((c + 1) as f64 * x[0] + x[1] * 0.7 - x[2]).sin()
                    })
                    .collect()
            })
            .collect();
        let s = Snapshot::new(g, vel, 0.0).unwrap();
        let p = permute_snapshot(&s, &[2, 0, 1]);
        assert!((energy(&s) - energy(&p)).abs() <= 1e-12 * energy(&s));
    }

    #[test]
    fn pairwise_sum_matches_naive_for_small_inputs() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }
}

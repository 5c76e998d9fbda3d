//! FFT plumbing over the periodic axes of a grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::grid::{AxisKind, Grid};

/// Physical wavenumber of FFT bin `m` on an axis with `n` points and period `l`.
pub fn wavenumber(m: usize, n: usize, l: f64) -> f64 {
    let s = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
    2.0 * PI * s / l
}

/// Signed integer mode index of FFT bin `m`.
pub fn mode_index(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// In-place 1D transforms along `axis` of a C-ordered array with shape `dims`.
/// The inverse is normalised by `1/n`.
pub fn fft_axis(dims: &[usize], data: &mut [Complex64], axis: usize, inverse: bool) {
    let n = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let scale = if inverse { 1.0 / n as f64 } else { 1.0 };
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for k in 0..n {
                line[k] = data[base + k * stride];
            }
            fft.process(&mut line);
            for k in 0..n {
                data[base + k * stride] = line[k] * scale;
            }
        }
    }
}

/// Forward transform over every periodic axis of the grid.
pub fn forward(grid: &Grid, f: &[f64]) -> Vec<Complex64> {
    let mut c: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    for a in 0..grid.ndim() {
        if grid.kind(a) == AxisKind::Periodic {
            fft_axis(grid.dims(), &mut c, a, false);
        }
    }
    c
}

/// Inverse transform over every periodic axis; returns the real part.
pub fn inverse_real(grid: &Grid, mut c: Vec<Complex64>) -> Vec<f64> {
    for a in 0..grid.ndim() {
        if grid.kind(a) == AxisKind::Periodic {
            fft_axis(grid.dims(), &mut c, a, true);
        }
    }
    c.into_iter().map(|z| z.re).collect()
}

/// Wavenumber vectors of every bin of a fully periodic grid.
pub fn wavevectors(grid: &Grid) -> Vec<[f64; 3]> {
    (0..grid.len())
        .map(|f| {
            let idx = grid.unravel(f);
            let mut k = [0.0; 3];
            for a in 0..grid.ndim() {
                if grid.kind(a) == AxisKind::Periodic {
                    k[a] = wavenumber(idx[a], grid.dims()[a], grid.extent(a));
                }
            }
            k
        })
        .collect()
}

/// Wavenumber used for odd derivatives: the Nyquist bin is zeroed.
pub fn derivative_wavenumber(m: usize, n: usize, l: f64) -> f64 {
    if n % 2 == 0 && m == n / 2 {
        0.0
    } else {
        wavenumber(m, n, l)
    }
}

/// Spectral first derivative along a periodic axis.
pub fn derivative_periodic(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    debug_assert_eq!(grid.kind(axis), AxisKind::Periodic);
    let mut c: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_axis(grid.dims(), &mut c, axis, false);
    let n = grid.dims()[axis];
    let l = grid.extent(axis);
    for (flat, z) in c.iter_mut().enumerate() {
        let m = grid.unravel(flat)[axis];
        let k = derivative_wavenumber(m, n, l);
        *z *= Complex64::new(0.0, k);
    }
    fft_axis(grid.dims(), &mut c, axis, true);
    c.into_iter().map(|z| z.re).collect()
}

/// Circular convolution of `f` with a kernel given on the same periodic grid
/// (kernel value at offset `o` stored at node `o mod dims`).
pub fn circular_convolve(grid: &Grid, f: &[f64], kernel_hat: &[Complex64]) -> Vec<f64> {
    let mut c = forward(grid, f);
    for (z, k) in c.iter_mut().zip(kernel_hat) {
        *z *= *k;
    }
    inverse_real(grid, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_sine_is_cosine() {
        let g = Grid::periodic_box(2, 32, 2.0 * PI).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|i| (3.0 * g.position(i)[0]).sin()).collect();
        let d = derivative_periodic(&g, &f, 0);
        for i in 0..g.len() {
            let x = g.position(i)[0];
            assert!((d[i] - 3.0 * (3.0 * x).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn wavenumber_sign_convention() {
        assert_eq!(mode_index(0, 8), 0);
        assert_eq!(mode_index(4, 8), 4);
        assert_eq!(mode_index(5, 8), -3);
        assert!((wavenumber(7, 8, 2.0 * PI) + 1.0).abs() < 1e-15);
    }
}

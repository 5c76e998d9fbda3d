//! The standard bump `exp(-1/(1-s^2))` and the smooth step built from it.

use std::sync::OnceLock;

/// `exp(-1/(1-s^2))` on `|s| < 1`, zero elsewhere.
pub fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive(a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = bump(lm);
    let frm = bump(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        left + right + diff / 15.0
    } else {
        adaptive(a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adaptive(m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// `int_{-1}^{z} bump`.
fn bump_integral(z: f64) -> f64 {
    let z = z.clamp(-1.0, 1.0);
    if z <= -1.0 {
        return 0.0;
    }
    // split so that the adaptive rule sees the bulk of the mass
    let mut total = 0.0;
    let mut a = -1.0;
    let panels = 16;
    let step = (z + 1.0) / panels as f64;
    for _ in 0..panels {
        let b = a + step;
        let (fa, fm, fb) = (bump(a), bump(0.5 * (a + b)), bump(b));
        total += adaptive(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), 1e-17, 40);
        a = b;
    }
    total
}

/// Total mass of the bump on `(-1, 1)`.
pub fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| bump_integral(1.0))
}

/// Normalised cumulative bump on `(-1, 1)`: 0 at -1, 1/2 at 0, 1 at 1.
pub fn bump_cdf(z: f64) -> f64 {
    if z <= -1.0 {
        0.0
    } else if z >= 1.0 {
        1.0
    } else if z > 0.0 {
        1.0 - bump_cdf(-z)
    } else {
        bump_integral(z) / bump_mass()
    }
}

/// Smooth step: 0 for `s <= 1/4`, 1 for `s >= 1/2`, C-infinity and monotone.
pub fn smooth_step(s: f64) -> f64 {
    bump_cdf(8.0 * s - 3.0)
}

/// Derivative of [`smooth_step`].
pub fn smooth_step_derivative(s: f64) -> f64 {
    8.0 * bump(8.0 * s - 3.0) / bump_mass()
}

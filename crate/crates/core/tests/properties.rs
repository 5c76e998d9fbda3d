//! Randomized checks of the structural invariants.

use std::f64::consts::PI;

use proptest::prelude::*;

use wsdiag_core::boundary_flux::{global_balance, shell_flux, smooth_step, smooth_step_derivative, ShellSpec};
use wsdiag_core::calculus::{divergence, energy, max_abs, permute_snapshot};
use wsdiag_core::commutator::{commutator_stress, commutator_via_increments, flux_term, radial_bump};
use wsdiag_core::mollify::{make_mollifier, mollify_field, Path};
use wsdiag_core::ns_solver::{run, Solver, SolverConfig};
use wsdiag_core::pressure::solve_pressure_periodic;
use wsdiag_core::synth::{component_means, fractional_field, CosineTerm, GeneratorSpec, SineTerm};
use wsdiag_core::{Domain, Grid, Region, Snapshot, Trajectory};

fn tbox(n: usize) -> Grid {
    Grid::periodic_box(2, n, 2.0 * PI).unwrap()
}

fn field(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_ignores_axis_relabeling(nx in 8usize..14, ny in 8usize..14, seed in any::<u64>()) {
        let g = Grid::new(&[nx, ny], &[2.0, 3.0], &[wsdiag_core::AxisKind::Periodic; 2]).unwrap();
        let mut rng = seed;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let u: Vec<Vec<f64>> = (0..2).map(|_| (0..g.len()).map(|_| next()).collect()).collect();
        let s = Snapshot::new(g, u, 0.0).unwrap();
        let e = energy(&s);
        let p = energy(&permute_snapshot(&s, &[1, 0]));
        prop_assert!((e - p).abs() <= 1e-12 * e.abs().max(1.0));
    }

    #[test]
    fn distance_gradient_is_minus_normal(ny in 9usize..80) {
        let dom = Domain::new(Grid::channel(&[8, ny], &[1.0, 1.5], 1).unwrap()).unwrap();
        let g = dom.grid();
        let h = g.spacing()[1];
        let half = dom.half_width().unwrap();
        let d = dom.distance_field().unwrap();
        let sign = dom.normal_sign_field().unwrap();
        for x in 0..g.len() {
            let j = g.unravel(x)[1];
            if j == 0 || j + 1 == ny {
                continue;
            }
            let (lo, hi) = ((j - 1) as f64 * h, (j + 1) as f64 * h);
            if !(hi < half || lo > half) {
                continue;
            }
            let up = g.shift(x, 1, 1).unwrap();
            let dn = g.shift(x, 1, -1).unwrap();
            let grad = (d[up] - d[dn]) / (2.0 * h);
            prop_assert!((grad + sign[x]).abs() <= 1e-12, "node {x}: {grad} vs {}", sign[x]);
        }
    }

    #[test]
    fn fractional_fields_are_solenoidal_and_mean_free(alpha in 0.05f64..0.95, seed in any::<u64>()) {
        let s = fractional_field(alpha, 10, seed, &tbox(32)).unwrap();
        prop_assert!(max_abs(&divergence(&s)) <= 1e-12);
        for m in component_means(&s) {
            prop_assert!(m.abs() <= 1e-13);
        }
    }

    #[test]
    fn shear_energy_is_stationary(
        a in -2.0f64..2.0, b in -2.0f64..2.0, ka in 1i32..3, kb in 0i32..3, t in 0.0f64..10.0,
    ) {
        let g = Grid::periodic_box(3, 12, 2.0 * PI).unwrap();
        let spec = |t: f64| GeneratorSpec::Shear {
            u: vec![SineTerm { amplitude: a, frequency: 1.0, phase: 0.3 }],
            w: vec![CosineTerm { amplitude: b, ka: ka as f64, kb: kb as f64, phase: 0.0 }],
            t,
        };
        let e0 = energy(&spec(0.0).generate(&g).unwrap());
        let e1 = energy(&spec(t).generate(&g).unwrap());
        prop_assert!((e1 - e0).abs() <= 1e-12 * e0.max(1e-300));
    }

    #[test]
    fn mollifier_keeps_sign_and_affine_profiles(eps_cells in 2.0f64..4.0, c0 in -3.0f64..3.0, c1 in -3.0f64..3.0) {
        let g = Grid::channel(&[16, 41], &[2.0 * PI, 1.0], 1).unwrap();
        let h = g.max_spacing();
        let m = make_mollifier(eps_cells * h, &g).unwrap();
        let inner = Region::interior(&g, 4.0 * h + 1e-9);
        let affine: Vec<f64> = (0..g.len()).map(|x| c0 + c1 * g.position(x)[1]).collect();
        let out = mollify_field(&g, &affine, &m, &inner, None, Path::Direct).unwrap();
        for x in inner.nodes() {
            prop_assert!((out[x] - affine[x]).abs() <= 1e-12 * (1.0 + affine[x].abs()));
        }
        let pos: Vec<f64> = affine.iter().map(|v| v * v).collect();
        let out = mollify_field(&g, &pos, &m, &inner, None, Path::Direct).unwrap();
        prop_assert!(out.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn commutator_paths_agree(u in field(32 * 32), v in field(32 * 32), eps_cells in 2.0f64..4.0) {
        let g = tbox(32);
        let m = make_mollifier(eps_cells * g.max_spacing(), &g).unwrap();
        let region = Region::index_box(&g, &[4, 6], &[20, 26]);
        let w = vec![u, v];
        let a = commutator_stress(&g, &w, &m, &region, None).unwrap();
        let b = commutator_via_increments(&g, &w, &m, &region, None).unwrap().stress;
        for (x, y) in a.entries.iter().zip(&b.entries) {
            for k in region.nodes() {
                prop_assert!((x[k] - y[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn commutator_scales_and_translates(u in field(24 * 24), v in field(24 * 24), k in 1i32..3, shift in 1usize..6) {
        let g = tbox(24);
        let m = make_mollifier(2.5 * g.max_spacing(), &g).unwrap();
        let full = Region::full(&g);
        let w = vec![u, v];
        let lam = 2f64.powi(k);
        let base = commutator_stress(&g, &w, &m, &full, None).unwrap();
        let scaled: Vec<Vec<f64>> = w.iter().map(|c| c.iter().map(|x| lam * x).collect()).collect();
        let s = commutator_stress(&g, &scaled, &m, &full, None).unwrap();
        for (x, y) in base.entries.iter().zip(&s.entries) {
            for n in 0..g.len() {
                prop_assert_eq!(y[n], lam * lam * x[n]);
            }
        }
        let moved: Vec<Vec<f64>> = w
            .iter()
            .map(|c| (0..g.len()).map(|n| c[g.shift(n, 0, -(shift as i64)).unwrap()]).collect())
            .collect();
        let t = commutator_stress(&g, &moved, &m, &full, None).unwrap();
        for (x, y) in base.entries.iter().zip(&t.entries) {
            for n in 0..g.len() {
                prop_assert!((y[n] - x[g.shift(n, 0, -(shift as i64)).unwrap()]).abs() <= 1e-14);
            }
        }
        let phi = radial_bump(&g, &[PI, PI], 2.0).unwrap();
        let tr = Trajectory::new(vec![Snapshot::new(g.clone(), w.clone(), 0.0).unwrap()], 1.0).unwrap();
        let ts = Trajectory::new(vec![Snapshot::new(g.clone(), scaled, 0.0).unwrap()], 1.0).unwrap();
        let f0 = flux_term(&tr, 2.5 * g.max_spacing(), &[1.0], &phi, None).unwrap();
        let f1 = flux_term(&ts, 2.5 * g.max_spacing(), &[1.0], &phi, None).unwrap();
        prop_assert!((f1 - lam.powi(3) * f0).abs() <= 1e-12 * f1.abs().max(1e-300));
    }

    #[test]
    fn periodic_laplacian_reproduces_source(alpha in 0.2f64..0.9, seed in any::<u64>()) {
        let s = fractional_field(alpha, 8, seed, &tbox(32)).unwrap();
        let r = solve_pressure_periodic(&s).unwrap();
        prop_assert!(r.residual <= 1e-10, "{}", r.residual);
    }

    #[test]
    fn shell_flux_is_nonnegative(u in field(8 * 65), v in field(8 * 65)) {
        let dom = Domain::new(Grid::channel(&[8, 65], &[1.0, 1.0], 1).unwrap()).unwrap();
        let g = dom.grid().clone();
        let s = Snapshot::new(g.clone(), vec![u, v.clone()], 0.0).unwrap().with_pressure(vec![0.5; g.len()]).unwrap();
        let shell = ShellSpec::with_default_ceiling(&dom, 0.4).unwrap();
        let tr = Trajectory::steady(&s, 2, 0.1);
        prop_assert!(shell_flux(&tr, &shell, &dom).unwrap() >= 0.0);

        // tangential-only data has no flux
        let mut t = s.clone();
        t.velocity[1] = vec![0.0; g.len()];
        prop_assert_eq!(shell_flux(&Trajectory::steady(&t, 2, 0.1), &shell, &dom).unwrap(), 0.0);
    }

    #[test]
    fn periodic_balance_is_raw_drift(a in field(16 * 16), b in field(16 * 16), c in field(16 * 16)) {
        let g = tbox(16);
        let dom = Domain::new(g.clone()).unwrap();
        let s0 = Snapshot::new(g.clone(), vec![a.clone(), b.clone()], 0.0).unwrap().with_pressure(c.clone()).unwrap();
        let s1 = Snapshot::new(g.clone(), vec![b, c, ], 0.5).unwrap().with_pressure(a).unwrap();
        let tr = Trajectory::new(vec![s0.clone(), s1.clone()], 0.5).unwrap();
        let r = global_balance(&tr, &dom, None, 0.0, 0.5).unwrap();
        prop_assert_eq!(r.boundary_term, 0.0);
        prop_assert_eq!(r.residual, r.e2 - r.e1);
        prop_assert!((r.e2 - r.e1 - (energy(&s1) - energy(&s0))).abs() <= 1e-12);
    }

    #[test]
    fn smooth_step_is_monotone(s in -1.0f64..2.0) {
        prop_assert!(smooth_step_derivative(s) >= 0.0);
        prop_assert!((0.0..=1.0).contains(&smooth_step(s)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn solver_runs_satisfy_energy_inequality(alpha in 0.3f64..0.9, seed in any::<u64>(), nu in 0.0f64..0.05) {
        let init = GeneratorSpec::Fractional { alpha, cutoff: Some(4), seed };
        let cfg = SolverConfig::periodic(16, nu, 0.02, 0.2, init);
        let out = run(&cfg).unwrap();
        prop_assert!(out.series.max_leray_residual() <= 1e-8);
    }

    #[test]
    fn projection_is_idempotent(alpha in 0.3f64..0.9, seed in any::<u64>()) {
        let cfg = SolverConfig::periodic(24, 0.01, 0.02, 0.02, GeneratorSpec::TaylorGreenSteady);
        let solver = Solver::new(&cfg).unwrap();
        let s = fractional_field(alpha, 6, seed, solver.node_grid()).unwrap();
        let once = solver.initial_state(&s).unwrap();
        let twice = solver.project(&once);
        let d = once.u.iter().zip(&twice.u).chain(once.v.iter().zip(&twice.v)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(d <= 1e-12, "{d}");
    }
}

use std::sync::Arc;

use proptest::prelude::*;
use qf_core::flow::{run, step, FlowLaw, FlowSpec, StopReason};
use qf_core::quermass::{
    eta_k, quermass_vector, s_k, sphere_quermass, sphere_quermass_rate, sphere_sigma_integral,
};
use qf_core::surface::{
    area, build_grid, compute_geometry, geodesic_sphere, integrate, minkowski_sides, GridMode, Resolution, RoundGrid,
    ShapeSpec,
};
use qf_core::symfun::c_nk;
use qf_core::verify::{verify_inequalities, RowStatus};
use qf_core::xi::{xi_parametric, xi_parametric_minkowski_sq, MIN_KNOTS};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn axisym(n: usize, nt: usize) -> Arc<RoundGrid> {
    build_grid(GridMode::Axisym, n, Resolution::axisym(nt)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn support_times_v_is_phi(eps in -0.08f64..0.08, l in 1usize..5, rho0 in 0.3f64..1.2) {
        let g = ShapeSpec::Perturbed { rho0, eps, l }.build(&axisym(3, 48)).unwrap();
        let f = compute_geometry(&g).unwrap();
        for node in 0..f.len() {
            prop_assert!((f.u()[node] * f.v()[node] - f.phi()[node]).abs() <= 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn constant_radius_is_umbilic(rho in 0.05f64..1.5, n in 2usize..6) {
        let grid = if n == 2 {
            build_grid(GridMode::Full2d, 2, Resolution::full2d(16, 32)).unwrap()
        } else {
            axisym(n, 32)
        };
        let f = compute_geometry(&geodesic_sphere(&grid, rho).unwrap()).unwrap();
        let cot = 1.0 / rho.tan();
        prop_assert!((f.min_kappa() - cot).abs() <= 1e-10 && (f.max_kappa() - cot).abs() <= 1e-10);
        prop_assert!(rel(area(&f), sphere_sigma_integral(n, rho, 0)) <= 1e-10);
    }

    #[test]
    fn grids_agree_on_axisymmetric_shapes(eps in -0.1f64..0.1, l in 1usize..5, rho0 in 0.4f64..1.1) {
        let shape = ShapeSpec::Perturbed { rho0, eps, l };
        let full = shape.build(&build_grid(GridMode::Full2d, 2, Resolution::full2d(32, 64)).unwrap()).unwrap();
        let axi = shape.build(&axisym(2, 32)).unwrap();
        let (qf, qa) = (quermass_vector(&full).unwrap(), quermass_vector(&axi).unwrap());
        for (a, b) in qf.values().iter().zip(qa.values()) {
            prop_assert!(rel(*a, *b) <= 1e-8);
        }
        let (ff, fa) = (compute_geometry(&full).unwrap(), compute_geometry(&axi).unwrap());
        prop_assert!(rel(integrate(&ff, &ff.sigma_field(2)), integrate(&fa, &fa.sigma_field(2))) <= 1e-8);
        let (l1, r1) = minkowski_sides(&ff, 1).unwrap();
        let (l2, r2) = minkowski_sides(&fa, 1).unwrap();
        prop_assert!(rel(l1, l2) <= 1e-8 && rel(r1, r2) <= 1e-8);
    }

    #[test]
    fn eta_inverts_sphere_quermass(rho in 0.05f64..1.45, n in 2usize..6, k_off in 0usize..6) {
        let k = (k_off % (n + 1)) as isize - 1;
        let a = sphere_quermass(n, rho, k).unwrap();
        prop_assert!((eta_k(n, k, a).unwrap() - rho).abs() <= 1e-11);
    }

    #[test]
    fn sphere_rate_matches_centred_difference(rho in 0.1f64..1.4, n in 2usize..6, k_off in 0usize..6) {
        let k = (k_off % (n + 1)) as isize - 1;
        let h = 1e-5;
        let d = (sphere_quermass(n, rho + h, k).unwrap() - sphere_quermass(n, rho - h, k).unwrap()) / (2.0 * h);
        prop_assert!(rel(d, sphere_quermass_rate(n, rho, k).unwrap()) <= 1e-6);
    }

    #[test]
    fn sphere_equality_for_every_pair(rho in 0.05f64..1.5, n in 2usize..6, a in 0usize..6, b in 0usize..6) {
        let (k, l) = ((a % n) as isize, (b % (n + 1)) as isize - 1);
        prop_assume!(k > l);
        let xi = xi_parametric(n, k, l, MIN_KNOTS).unwrap();
        let lhs = sphere_quermass(n, rho, k).unwrap();
        let got = xi.eval(sphere_quermass(n, rho, l).unwrap()).unwrap();
        prop_assert!(rel(got, lhs) <= 1e-9, "n={} k={} l={} rho={}: {} vs {}", n, k, l, rho, got, lhs);
    }

    #[test]
    fn cgls_spheres_follow_their_scalar_ode(rho0 in 0.4f64..1.1, n in 2usize..5, kk in 1usize..4) {
        let k = 1 + (kk - 1) % (n - 1);
        let grid = axisym(n, 32);
        let mut spec = FlowSpec::new(FlowLaw::Cgls, k);
        spec.step.adaptive = false;
        spec.step.dt_init = 2e-4;
        spec.stop.t_max = 0.1;
        let trace = run(geodesic_sphere(&grid, rho0).unwrap(), &spec, &[]).unwrap();
        // rho' = a cos(rho) integrates through the Gudermannian function
        let a = c_nk(n, k).unwrap() - (n - k) as f64 / (k + 1) as f64;
        let want = ((a * 0.1 + rho0.sin().atanh()).tanh()).asin();
        let g = trace.final_graph.unwrap();
        prop_assert!(rel(g.max_rho(), want) <= 1e-6 && g.max_rho() == g.min_rho());
    }

    #[test]
    fn non_convex_shapes_get_no_verdict(rho0 in 1.0f64..1.2, eps in 0.3f64..0.35) {
        let g = ShapeSpec::Perturbed { rho0, eps, l: 2 }.build(&axisym(3, 64)).unwrap();
        if let Ok(r) = verify_inequalities(&g) {
            prop_assert!(!r.convex);
            prop_assert!(r.rows.iter().all(|x| x.pass.is_none() && x.status == RowStatus::HypothesisViolated));
        }
    }
}

#[test]
fn every_comparison_function_is_strictly_increasing() {
    for n in 2..=6usize {
        for k in 0..n as isize {
            for l in -1..k {
                let xi = xi_parametric(n, k, l, MIN_KNOTS).unwrap();
                let (lo, hi) = xi.domain();
                let v: Vec<f64> = (1..=1000)
                    .map(|i| xi.eval(lo + (hi - lo) * 0.9 * i as f64 / 1000.0).unwrap())
                    .collect();
                assert!(v.windows(2).all(|w| w[1] > w[0]), "n={n} k={k} l={l}");
                // endpoint limit: the equator pairs A_k with s_k
                assert!(rel(xi.eval(hi).unwrap(), s_k(n, k).unwrap()) <= 1e-9);
            }
        }
    }
}

#[test]
fn squared_minkowski_comparison_meets_spheres() {
    for n in 2..=5 {
        let xi = xi_parametric_minkowski_sq(n, MIN_KNOTS).unwrap();
        for rho in [0.2, 0.7, 1.3] {
            let h = sphere_sigma_integral(n, rho, 1);
            let a0 = sphere_sigma_integral(n, rho, 0);
            assert!(rel(xi.eval(a0 * a0).unwrap(), h * h) <= 1e-9);
        }
    }
}

#[test]
fn cgls0_keeps_spheres_per_unit_time() {
    for n in 2..=4 {
        let grid = axisym(n, 64);
        let s = geodesic_sphere(&grid, 0.9).unwrap();
        let mut g = s.clone();
        for _ in 0..100 {
            g = step(&g, &FlowSpec::new(FlowLaw::Cgls0, 0), 1e-2).unwrap();
        }
        assert!(g.rho().iter().all(|r| (r - 0.9).abs() <= 1e-10), "n={n}");
    }
}

#[test]
fn gerhardt_ends_at_the_equator_values() {
    for (n, k) in [(2usize, 1usize), (3, 2), (3, 1), (4, 3)] {
        let grid = axisym(n, 64);
        let start = ShapeSpec::Perturbed { rho0: 0.8, eps: 0.04, l: 2 }.build(&grid).unwrap();
        let mut spec = FlowSpec::new(FlowLaw::Gerhardt, k);
        // the volume deficit is first order in the distance to the equator
        spec.stop.equator_tol = 1e-4;
        spec.record_interval = 0.05;
        let trace = run(start, &spec, &[]).unwrap();
        assert_eq!(trace.stop, StopReason::EquatorReached);
        assert!(trace.records.iter().all(|r| r.min_kappa > 0.0));
        for j in -1..n as isize {
            assert!(rel(trace.last().quermass.a(j), s_k(n, j).unwrap()) <= 1e-3, "n={n} k={k} A_{j}");
        }
    }
}

#[test]
fn reports_are_deterministic() {
    let g = ShapeSpec::Perturbed { rho0: 0.7, eps: 0.06, l: 3 }
        .build(&build_grid(GridMode::Full2d, 2, Resolution::full2d(32, 64)).unwrap())
        .unwrap();
    let a = verify_inequalities(&g).unwrap().to_json().unwrap();
    let b = verify_inequalities(&g).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}

use horizon_core::model::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn baseline() -> ModelSpec {
    build_model(1.0, 0.03, 0.1, 2).unwrap()
}

fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn horizons_match_bisection_and_central_differences() {
    let m = baseline();
    assert_eq!(m.horizons.len(), 2);
    let f = |r: f64| m.f(r);
    // f < 0 near 0, > 0 between the horizons, < 0 beyond r_c
    let r_e = bisect(&f, 1.0, 3.5);
    let r_c = bisect(&f, 3.5, 20.0);
    assert!((m.horizons[0] - r_e).abs() < 1e-12 * r_e, "{} {r_e}", m.horizons[0]);
    assert!((m.horizons[1] - r_c).abs() < 1e-12 * r_c, "{} {r_c}", m.horizons[1]);
    for (k, &r) in m.horizons.iter().enumerate() {
        let h = 1e-5 * r;
        let df = (f(r + h) - f(r - h)) / (2.0 * h);
        assert!(m.kappa[k] > 0.0);
        assert!((m.kappa[k] - 0.5 * df.abs()).abs() < 1e-8 * m.kappa[k]);
    }
}

#[test]
fn de_sitter_slice_is_regular_at_the_horizon() {
    let m = build_model(0.0, 3.0, 1.0, 0).unwrap();
    let s = build_slice(&m).unwrap();
    assert!(s.sides() == vec![Side::Cosmological]);
    for rt in [0.9, 0.99, 0.999999, 1.0] {
        for v in [s.lapse(rt), s.shift(rt), s.k_rr(rt), s.k_sphere(rt)] {
            assert!(v.is_finite());
        }
    }
    let a = s.lapse(1.0);
    assert!((s.shift_normal(Side::Cosmological, 1.0) - a).abs() < 1e-14);
    assert!(s.horizon_radius(Side::Event).is_err());
}

#[test]
fn killing_norm_vanishes_linearly_with_surface_gravity_slope() {
    let m = baseline();
    let s = build_slice(&m).unwrap();
    for side in s.sides() {
        let rh = s.horizon_radius(side).unwrap();
        let kappa = s.kappa(side).unwrap();
        assert!(s.mu(rh).abs() < 1e-12);
        // μ grows into the interior at rate 2κ
        let h = 1e-6 * rh;
        let d = s.direction(side);
        let slope = (s.mu(rh + d * h) - s.mu(rh - d * h)) / (2.0 * h);
        assert!((slope - 2.0 * kappa).abs() < 1e-6 * kappa, "{side:?} {slope} {kappa}");
    }
}

#[test]
fn shift_norm_identity_holds_on_the_slice() {
    for m in [baseline(), build_model(0.0, 3.0, 1.0, 1).unwrap(), build_model(0.5, 0.1, 2.0, 0).unwrap()] {
        let s = build_slice(&m).unwrap();
        for i in 1..200 {
            let rt = s.rt(i as f64 / 200.0);
            let a2 = s.lapse(rt).powi(2);
            let lhs = s.k_ww(rt);
            assert!((lhs - (a2 - s.mu(rt))).abs() < 1e-10 * a2.max(1.0), "{rt}");
        }
    }
}

#[test]
fn unit_surface_gravity_doubles_frequencies() {
    let m = build_model(0.0, 3.0, 1.0, 0).unwrap();
    let n = normalize(&build_slice(&m).unwrap(), Side::Cosmological).unwrap();
    assert!((n.time_scale - 2.0).abs() < 1e-14);
    let w = Complex64::new(0.3, -0.7);
    assert!((n.to_physical(w) - 2.0 * w).norm() < 1e-15);
    assert!((n.to_normalized(n.to_physical(w)) - w).norm() < 1e-15);
    assert!(n.kappa_ratio.is_none());
}

#[test]
fn normalized_metric_has_half_surface_gravity() {
    let s = build_slice(&baseline()).unwrap();
    for side in s.sides() {
        let n = normalize(&s, side).unwrap();
        assert!((n.normalized_kappa(side).unwrap() - 0.5).abs() < 1e-8, "{side:?}");
        let other = s.sides().into_iter().find(|&o| o != side).unwrap();
        let ratio = n.normalized_kappa(other).unwrap() / 0.5;
        assert!((ratio - n.kappa_ratio.unwrap()).abs() < 1e-6 * ratio);
    }
}

#[test]
fn collar_function_matches_dr_to_second_order() {
    let s = build_slice(&baseline()).unwrap();
    for side in s.sides() {
        let n = normalize(&s, side).unwrap();
        let collar = n.collar();
        assert!(collar > 0.0);
        let worst = (1..=400)
            .map(|i| {
                let r = collar * i as f64 / 400.0;
                (n.g_dr(r) + r).abs() / (r * r)
            })
            .fold(0.0, f64::max);
        assert!(worst.is_finite() && worst < 10.0, "{side:?} {worst}");
    }
}

#[test]
fn extremal_and_invalid_parameters_are_rejected() {
    assert!(matches!(build_model(1.0, 1.0 / 9.0, 0.1, 0), Err(ModelError::Extremal(_))));
    assert!(matches!(build_model(1.0, 0.2, 0.1, 0), Err(ModelError::Extremal(_))));
    assert!(matches!(build_model(-1.0, 0.03, 0.1, 0), Err(ModelError::Domain(_))));
    assert!(matches!(build_model(1.0, 0.0, 0.1, 0), Err(ModelError::Domain(_))));
    assert!(matches!(build_model(1.0, 0.03, f64::NAN, 0), Err(ModelError::Domain(_))));
    assert!(build_model_allow_zero_potential(1.0, 0.03, 0.0, 0).is_ok());
}

#[test]
fn constant_function_sees_only_the_potential() {
    let m = build_model(1.0, 0.03, 0.1, 0).unwrap();
    let p = reduce(&build_slice(&m).unwrap());
    for i in 0..=20 {
        let rt = p.slice.rt(i as f64 / 20.0);
        let c = p.at(rt);
        // derivative terms drop out of K0·1
        assert_eq!(c.a0, 0.1);
    }
}

#[test]
fn principal_symbol_is_the_shifted_dual_metric() {
    let p = reduce(&build_slice(&baseline()).unwrap());
    for i in 0..=40 {
        let rt = p.slice.rt(i as f64 / 40.0);
        for (sigma, eta, z) in [(1.0, 0.0, 0.0), (0.3, 2.0, -1.0), (-2.0, 0.5, 3.0), (0.0, 1.0, 1.0)] {
            let lhs = p.principal_symbol(rt, sigma, eta, z);
            let rhs = -p.dual_metric(rt, -z, sigma, eta);
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{rt} {lhs} {rhs}");
        }
    }
}

#[test]
fn dual_metric_is_negative_on_spacelike_covectors() {
    let p = reduce(&build_slice(&baseline()).unwrap());
    for i in 1..40 {
        let rt = p.slice.rt(i as f64 / 40.0);
        let s = &p.slice;
        // τ = W·ξ kills the normal component
        for (sigma, eta) in [(1.0, 0.0), (0.0, 1.0), (-0.4, 2.0)] {
            let tau = s.shift(rt) * sigma;
            let g = p.dual_metric(rt, tau, sigma, eta);
            assert!(g < 0.0, "{rt} {g}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn admissible_models_slice_cleanly(mass in 0.0f64..2.0, frac in 0.05f64..0.95, v0 in 0.01f64..3.0, ell in 0u32..5) {
        let lambda = frac / (9.0 * mass * mass).max(1.0 / 3.0);
        let m = build_model(mass, lambda, v0, ell).unwrap();
        prop_assert!(m.kappa.iter().all(|&k| k > 0.0));
        for &r in &m.horizons {
            prop_assert!(m.f(r).abs() < 1e-10);
        }
        let s = build_slice(&m).unwrap();
        for i in 0..=50 {
            let rt = s.rt(i as f64 / 50.0);
            prop_assert!(s.q(rt) > 0.0);
            prop_assert!(s.tilt(rt).abs() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn collar_coordinate_round_trips(r in -0.05f64..1.0, event in any::<bool>()) {
        let s = build_slice(&baseline()).unwrap();
        let side = if event { Side::Event } else { Side::Cosmological };
        let n = normalize(&s, side).unwrap();
        prop_assert!((n.r_of(n.rt_of(r)) - r).abs() < 1e-12);
    }
}

use horizon_core::model::*;
use horizon_core::symbol::*;
use proptest::prelude::*;
use std::sync::OnceLock;

fn collars() -> &'static Vec<CollarSymbol> {
    static C: OnceLock<Vec<CollarSymbol>> = OnceLock::new();
    C.get_or_init(|| {
        let s = build_slice(&build_model(1.0, 0.03, 0.1, 2).unwrap()).unwrap();
        s.sides().into_iter().map(|side| CollarSymbol::new(&normalize(&s, side).unwrap())).collect()
    })
}

fn radial(p: &SymbolPoint) -> f64 {
    p.r
}

#[test]
fn model_bracket_values_at_a_reference_point() {
    let p = SymbolPoint::new(1.0, 2.0, 3.0, 0.0);
    let k0 = 0.7;
    let g0 = |q: &SymbolPoint| eval_g0(q, k0);
    let g0_r = poisson_bracket(&g0, &radial, &p, 16.0, 1.0).unwrap();
    assert!((g0_r + 10.0).abs() < 1e-9, "{g0_r}");
    let inner = |q: &SymbolPoint| -2.0 * (q.r * q.rho + q.tau);
    let g0_g0_r = poisson_bracket(&g0, &inner, &p, 16.0, 10.0).unwrap();
    assert!((g0_g0_r - 32.0).abs() < 1e-8, "{g0_g0_r}");
    let t = collars()[0].table(&p);
    assert_eq!((t.g0_r, t.g0_g0_r), (-10.0, 32.0));
}

#[test]
fn closed_form_brackets_match_finite_differences() {
    let mut checked = 0;
    for sym in collars() {
        let pts = sphere_samples(0.95 * sym.collar, 24, 48);
        for p in &pts {
            let n = p.fibre_norm2().sqrt();
            let g = |q: &SymbolPoint| sym.g(q);
            let gr = |q: &SymbolPoint| sym.g_r(q);
            let fd1 = poisson_bracket(&g, &radial, p, n * n, p.r).unwrap();
            let fd2 = poisson_bracket(&g, &gr, p, n * n, n).unwrap();
            let (c1, c2) = (sym.g_r(p), sym.g_g_r(p));
            assert!((fd1 - c1).abs() <= 1e-8 * c1.abs().max(n), "{p:?} {fd1} {c1}");
            assert!((fd2 - c2).abs() <= 1e-8 * c2.abs().max(n * n), "{p:?} {fd2} {c2}");
            checked += 1;
        }
    }
    assert!(checked >= 1000, "{checked}");
}

#[test]
fn remainders_at_the_horizon_are_pure_tau_squared() {
    for sym in collars() {
        for &(rho, tau, eta) in &hemisphere(40) {
            let p = SymbolPoint::new(0.0, rho, tau, eta);
            let t = sym.table(&p);
            assert!((t.g - t.g0 - tau * tau).abs() < 1e-12, "{t:?}");
            assert!(t.f.abs() < 1e-12 && (t.h + 2.0 * tau * tau).abs() < 1e-12, "{t:?}");
        }
    }
}

#[test]
fn first_remainder_is_order_r() {
    for sym in collars() {
        let worst = sphere_samples(sym.collar, 40, 60)
            .iter()
            .map(|p| sym.f_remainder(p).abs() / (p.r * p.fibre_norm2().sqrt()))
            .fold(0.0, f64::max);
        assert!(worst.is_finite() && worst < 10.0, "{worst}");
    }
}

#[test]
fn negligible_inequalities_hold_with_nonnegative_margin() {
    let mut r_gamma = vec![];
    for sym in collars() {
        let pts = sphere_samples(0.05, 50, 200);
        let rep = verify_negligible(sym, &pts, 0.1).unwrap();
        assert!(rep.margin >= 0.0, "{rep:?}");
        assert!(rep.c_gamma <= 10.0 && rep.samples >= 1000, "{rep:?}");
        assert!(rep.c_z.is_finite());
        r_gamma.push(rep.r_gamma);
    }
    // the event collar breaks inside the sweep, the cosmological one does not
    assert!((0.02..0.05).contains(&r_gamma[0]), "{r_gamma:?}");
    assert_eq!(r_gamma[1], 0.05);
}

#[test]
fn samples_outside_the_collar_are_chart_errors() {
    let sym = &collars()[0];
    let far = SymbolPoint::new(2.0 * sym.collar, 1.0, 0.0, 0.0);
    assert_eq!(sym.eval_g(&far), Err(SymbolError::Chart(2.0 * sym.collar)));
    assert!(matches!(verify_negligible(sym, &[far], 0.1), Err(SymbolError::Chart(_))));
    assert!(sym.eval_g(&SymbolPoint::new(0.5 * sym.collar, 1.0, 0.0, 0.0)).is_ok());
}

#[test]
fn dual_metric_is_negative_off_the_time_direction() {
    // τ = W·ξ removes the timelike part, leaving −ρ² − κ_ang η²
    for sym in collars() {
        for i in 0..50 {
            let r = sym.collar * i as f64 / 50.0;
            for (rho, eta) in [(1.0, 0.0), (0.0, 1.0), (-0.3, 0.8)] {
                let tau = -sym.norm.h_hat(r) * rho;
                assert!(sym.g(&SymbolPoint::new(r, rho, tau, eta)) < 0.0);
            }
        }
    }
}

fn poly_a(p: &SymbolPoint) -> f64 {
    p.r * p.rho * p.rho + 0.5 * p.tau * p.rho - p.r * p.r
}

fn poly_b(p: &SymbolPoint) -> f64 {
    (p.r + 1.0).ln() * p.rho + p.tau * p.tau
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symbols_are_homogeneous_in_the_fibre(
        side in 0usize..2, x in 0.01f64..1.0, rho in -2.0f64..2.0, tau in -2.0f64..2.0,
        eta in 0.0f64..2.0, l in 0.1f64..10.0,
    ) {
        let sym = &collars()[side];
        let p = SymbolPoint::new(x * sym.collar, rho, tau, eta);
        let q = p.scaled(l);
        let n2 = p.fibre_norm2().max(1e-6);
        prop_assert!((sym.g(&q) - l * l * sym.g(&p)).abs() < 1e-12 * l * l * n2);
        prop_assert!((sym.g_r(&q) - l * sym.g_r(&p)).abs() < 1e-12 * l * n2.sqrt() * 4.0);
        prop_assert!((sym.g_g_r(&q) - l * l * sym.g_g_r(&p)).abs() < 1e-12 * l * l * n2 * 4.0);
    }

    #[test]
    fn brackets_are_antisymmetric_and_obey_leibniz(
        r in 0.1f64..1.0, rho in -2.0f64..2.0, tau in -2.0f64..2.0,
    ) {
        let p = SymbolPoint::new(r, rho, tau, 0.0);
        let ab = poisson_bracket(&poly_a, &poly_b, &p, 10.0, 10.0).unwrap();
        let ba = poisson_bracket(&poly_b, &poly_a, &p, 10.0, 10.0).unwrap();
        prop_assert!((ab + ba).abs() < 1e-9 * ab.abs().max(1.0));
        let prod = |q: &SymbolPoint| poly_a(q) * poly_b(q);
        let lhs = poisson_bracket(&radial, &prod, &p, 1.0, 100.0).unwrap();
        let ra = poisson_bracket(&radial, &poly_a, &p, 1.0, 10.0).unwrap();
        let rb = poisson_bracket(&radial, &poly_b, &p, 1.0, 10.0).unwrap();
        let rhs = ra * poly_b(&p) + poly_a(&p) * rb;
        prop_assert!((lhs - rhs).abs() < 1e-8 * lhs.abs().max(1.0), "{} {}", lhs, rhs);
    }
}

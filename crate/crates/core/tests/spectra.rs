use horizon_core::model::*;
use horizon_core::spectra::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use std::sync::OnceLock;

fn coeffs(mass: f64, lambda: f64, v0: f64, ell: u32) -> PencilCoefficients {
    reduce(&build_slice(&build_model_allow_zero_potential(mass, lambda, v0, ell).unwrap()).unwrap())
}

fn baseline() -> &'static OperatorPencil {
    static P: OnceLock<OperatorPencil> = OnceLock::new();
    P.get_or_init(|| discretize(&coeffs(1.0, 0.03, 0.1, 2), 48, Scheme::Collocation).unwrap())
}

fn smooth(p: &OperatorPencil, a: &[f64]) -> DVector<Complex64> {
    DVector::from_fn(p.len(), |i, _| {
        let x = p.grid.x[i];
        Complex64::new(a[0] * (a[1] * x).sin() + a[2], a[3] * (x - 0.3).powi(2) * (a[4] * x).cos())
    })
}

const LOWEST: [(f64, f64); 4] = [
    (0.43710690697464, -0.07685395007540),
    (0.4175495317484341, -0.23356057003810407),
    (0.2780544684603556, -0.31568882416570937),
    (0.38337629413925, -0.40651833988956),
];

#[test]
fn de_sitter_resonances_match_the_closed_form() {
    for (v0, ell) in [(2.0, 0u32), (2.0, 1), (1.0, 2), (0.5, 1)] {
        let p = discretize(&coeffs(0.0, 3.0, v0, ell), 48, Scheme::Collocation).unwrap();
        let w = Window { re_min: -1.0, re_max: 1.0, im_min: -3.5, im_max: 0.5 };
        let set = resonances(&p, &w).unwrap();
        // ω = −i(ℓ + 2n + 3/2 ∓ √(9/4 − v0)) for κ = 1
        let s = (2.25f64 - v0).sqrt();
        let mut exact: Vec<f64> = (0..4)
            .flat_map(|n| [-1.0, 1.0].map(|sg| ell as f64 + 2.0 * n as f64 + 1.5 + sg * s))
            .filter(|d| *d <= 3.5)
            .collect();
        exact.sort_by(|a, b| a.partial_cmp(b).unwrap());
        exact.dedup();
        let found: Vec<Complex64> = set.converged().map(|r| r.omega).collect();
        assert_eq!(found.len(), exact.len(), "v0 {v0} ℓ {ell}: {found:?} vs {exact:?}");
        for (w, d) in found.iter().zip(&exact) {
            assert!(w.re.abs() < 1e-12 && (w.im + d).abs() < 1e-10, "{w} vs −{d}i");
        }
    }
}

#[test]
fn baseline_resonances_are_frozen() {
    let w = Window { re_min: -1.0, re_max: 1.0, im_min: -0.5, im_max: 0.5 };
    let set = resonances(baseline(), &w).unwrap();
    let conv: Vec<Complex64> = set.converged().map(|r| r.omega).collect();
    assert_eq!(conv.len(), 8, "{conv:?}");
    for (k, &(re, im)) in LOWEST.iter().enumerate() {
        for sign in [-1.0, 1.0] {
            let target = Complex64::new(sign * re, im);
            let hit = conv.iter().any(|w| (w - target).norm() < 1e-9);
            assert!(hit, "mode {k} {target}");
        }
    }
    assert!(set.items.iter().all(|r| r.residual < 1e-10));
}

#[test]
fn resonance_set_is_mirror_symmetric_and_ordered() {
    let w = Window { re_min: -1.0, re_max: 1.0, im_min: -0.5, im_max: 0.0 };
    let set = resonances(baseline(), &w).unwrap();
    for r in &set.items {
        let m = mirror(r.omega);
        assert!(set.items.iter().any(|s| (s.omega - m).norm() < 1e-12 && s.converged == r.converged));
    }
    for pair in set.items.windows(2) {
        assert!(-pair[0].omega.im <= -pair[1].omega.im + 1e-15);
    }
}

#[test]
fn lowest_resonances_converge_under_grid_doubling() {
    let c = coeffs(1.0, 0.03, 0.1, 2);
    let coarse = discretize(&c, 64, Scheme::Collocation).unwrap();
    let fine = discretize(&c, 128, Scheme::Collocation).unwrap();
    // mirror partners count separately
    let w = Window { re_min: -2.0, re_max: 2.0, im_min: -0.6, im_max: 0.0 };
    let set = resonances(&coarse, &w).unwrap();
    let lowest: Vec<&Resonance> = set.converged().take(5).collect();
    assert_eq!(lowest.len(), 5);
    for r in lowest {
        let f = fine.refine(r.omega, 1e-2 * r.omega.norm(), 12).unwrap().omega;
        assert!((f - r.omega).norm() < 1e-6 * r.omega.norm(), "{} {}", r.omega, f);
    }
}

#[test]
fn finite_differences_reproduce_the_fundamental_mode() {
    let p = discretize(&coeffs(1.0, 0.03, 0.1, 2), 256, Scheme::FiniteDifference4).unwrap();
    let w0 = Complex64::new(LOWEST[0].0, LOWEST[0].1);
    let w = p.refine(w0, 0.05, 20).unwrap().omega;
    assert!((w - w0).norm() < 1e-4 * w0.norm(), "{w}");
}

#[test]
fn nothing_is_found_high_in_the_upper_half_plane() {
    let w = Window { re_min: -5.0, re_max: 5.0, im_min: 2.0, im_max: 10.0 };
    assert!(resonances(baseline(), &w).unwrap().items.is_empty());
    let up = Window { re_min: -2.0, re_max: 2.0, im_min: 0.0, im_max: 2.0 };
    assert!(resonances(baseline(), &up).unwrap().items.iter().all(|r| !r.converged));
}

#[test]
fn zero_potential_monopole_has_a_zero_mode() {
    let p = discretize(&coeffs(1.0, 0.03, 0.0, 0), 48, Scheme::Collocation).unwrap();
    let w = Window { re_min: -0.5, re_max: 0.5, im_min: -0.1, im_max: 0.1 };
    let set = resonances(&p, &w).unwrap();
    let zero = set.converged().find(|r| r.omega.norm() < 1e-8);
    assert!(zero.is_some(), "{:?}", set.items);
    let one = DVector::from_element(p.len(), Complex64::from(1.0));
    assert!((p.matrix(Complex64::from(0.0)) * one).norm() < 1e-10);
}

#[test]
fn l2_resolvent_is_the_inverse_smallest_singular_value() {
    let p = baseline();
    let w = Complex64::new(0.9, 0.05);
    let s = DVector::from_fn(p.len(), |i, _| p.mass[i].sqrt());
    let whitened = DMatrix::from_fn(p.len(), p.len(), |i, j| p.matrix(w)[(i, j)] * s[i] / s[j]);
    let sv = whitened.singular_values();
    let direct = 1.0 / sv.min();
    let via = p.resolvent_norm(w, Norm::L2).unwrap();
    assert!((via - direct).abs() < 1e-8 * direct, "{via} {direct}");
    assert!(p.resolvent_norm(w, Norm::H1).unwrap() > 0.0);
}

#[test]
fn smallest_singular_value_of_a_diagonal_pencil() {
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![
        Complex64::new(3.0, 4.0),
        Complex64::new(0.0, -0.25),
        Complex64::new(2.0, 0.0),
    ]));
    assert!((smallest_singular_value(d) - 0.25).abs() < 1e-15);
}

#[test]
fn semiclassical_scaling_is_consistent() {
    let p = baseline();
    for (z, h) in [(Complex64::new(1.0, 0.0), 0.5), (Complex64::new(0.7, -0.1), 0.1)] {
        assert!((semiclassical_inverse(semiclassical_map(z, h), h) - z).norm() < 1e-15);
        assert_eq!(semiclassical_map(z, h), z / h);
        let a = p.semiclassical_matrix(z, h);
        let b = p.matrix(z / h) * Complex64::from(h * h);
        assert!((a - b).norm() < 1e-12 * p.matrix(z / h).norm() * h * h);
    }
}

#[test]
fn greens_identity_converges_at_scheme_order() {
    let c = coeffs(1.0, 0.03, 0.1, 2);
    let mut rng = 0x2545f4914f6cdd1du64;
    let mut next = || {
        rng ^= rng << 13;
        rng ^= rng >> 7;
        rng ^= rng << 17;
        (rng >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
    };
    for _ in 0..10 {
        let a: Vec<f64> = (0..5).map(|_| next()).collect();
        let res = |n: usize, scheme| {
            let p = discretize(&c, n, scheme).unwrap();
            let u = smooth(&p, &a);
            let (lhs, _) = p.greens_sides(&u, 1.0, 1.0);
            p.greens_identity_residual(&u, 1.0, 1.0) / lhs.abs().max(1.0)
        };
        let (e1, e2) = (res(32, Scheme::FiniteDifference4), res(64, Scheme::FiniteDifference4));
        let order = (e1 / e2).log2();
        assert!(order > 3.3, "{a:?} {e1:e} {e2:e}");
        assert!(res(32, Scheme::Collocation) < 1e-12);
    }
}

#[test]
fn greens_identity_is_exact_for_real_data_at_zero_frequency() {
    for scheme in [Scheme::Collocation, Scheme::FiniteDifference4] {
        let p = discretize(&coeffs(1.0, 0.03, 0.1, 2), 40, scheme).unwrap();
        let u = smooth(&p, &[1.0, 2.0, 0.3, 0.0, 0.0]);
        assert!(u.iter().all(|z| z.im == 0.0));
        assert!(p.greens_identity_residual(&u, 0.0, 1.0) < 1e-12);
    }
}

#[test]
fn interior_data_has_no_boundary_contribution() {
    let p = baseline();
    let u = DVector::from_fn(p.len(), |i, _| {
        let x = p.grid.x[i];
        // vanishes to sixth order at both ends and is resolved exactly
        let bump = (x * (1.0 - x)).powi(6) * 4096.0;
        Complex64::new(bump, 0.3 * bump * x)
    });
    let (boundary, volume) = p.greens_sides(&u, 1.0, 1.0);
    assert!(boundary < 1e-10, "{boundary}");
    assert!(volume.abs() < 1e-8, "{volume}");
}

#[test]
fn pencil_is_self_adjoint_up_to_the_horizon_flux() {
    let p = baseline();
    for k in 0..10 {
        let t = k as f64;
        let u = smooth(p, &[1.0, 1.0 + t, 0.2 * t, -0.5, 2.0 - 0.1 * t]);
        let v = smooth(p, &[0.3 * t - 1.0, 2.0, -0.4, 0.5 + 0.1 * t, 1.0]);
        let scale = p.inner(&u, &u).norm().sqrt() * p.inner(&v, &v).norm().sqrt();
        let defect = p.adjoint_defect(0.3 + 0.2 * t, &u, &v);
        assert!(defect < 1e-10 * scale.max(1.0), "{defect:e}");
    }
}

#[test]
fn b_weighted_norm_is_dominated_by_h1() {
    let p = baseline();
    for k in 0..20 {
        let t = k as f64 * 0.37;
        let u = smooth(p, &[t.sin(), 1.0 + t, t.cos(), 1.5 - t, 0.5 * t]);
        let (b, h1, l2) = (p.norm_of(Norm::H1b, &u), p.norm_of(Norm::H1, &u), p.norm_of(Norm::L2, &u));
        assert!(l2 <= b * (1.0 + 1e-12) && b <= h1 * (1.0 + 1e-12), "{l2} {b} {h1}");
    }
}

#[test]
fn strip_scan_certifies_the_baseline() {
    let r = scan_strip(baseline(), (0.5, 2.0), &[1.0, 0.5, 0.25], 6, DepthProfile { c1: 5.0 }).unwrap();
    assert!(r.verdict && r.growth_at_most_linear && r.real_axis.is_empty());
    assert!(r.fit.slope.is_finite() && r.c0_threshold.is_finite() && r.c_bound.is_finite());
    // the difference is formed by cancellation, so only a loose check
    assert!(r.perturbation_ratio <= 1.0 + 1e-3 && r.b_bound.is_finite(), "{} {}", r.perturbation_ratio, r.b_bound);
    let re: Vec<f64> = r.points.iter().map(|p| p.re_omega).collect();
    let (lo, hi) = re.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi / lo >= 10.0);
    assert_eq!(r.points.len(), 3 * 6 * 3);
}

#[test]
fn strip_scan_flags_the_zero_mode() {
    let p = discretize(&coeffs(1.0, 0.03, 0.0, 0), 48, Scheme::Collocation).unwrap();
    let r = scan_strip(&p, (0.5, 2.0), &[1.0, 0.5, 0.25], 6, DepthProfile { c1: 5.0 }).unwrap();
    assert!(!r.verdict);
    assert_eq!(r.real_axis.len(), 1);
    assert!(r.real_axis[0].norm() < 1e-8);
}

#[test]
fn too_few_scan_samples_fail_the_fit() {
    let r = scan_strip(baseline(), (0.5, 2.0), &[1.0, 0.5], 1, DepthProfile { c1: 5.0 });
    assert_eq!(r.err(), Some(SpectraError::Fit(2)));
}

#[test]
fn linear_growth_is_not_superlinear() {
    let x: Vec<f64> = (1..=10).map(|k| k as f64).collect();
    let lin: Vec<f64> = x.iter().map(|v| 0.5 + 2.0 * v + 1e-3 * (3.0 * v).sin()).collect();
    assert!(!fit_log_norms(&x, &lin).unwrap().superlinear());
    let quad: Vec<f64> = x.iter().map(|v| 0.5 + v * v).collect();
    let f = fit_log_norms(&x, &quad).unwrap();
    assert!(f.superlinear() && (f.curvature - 1.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Real coefficients give conj P(ω) = P(−ω̄).
    #[test]
    fn pencil_matrix_respects_the_mirror(re in -3.0f64..3.0, im in -2.0f64..2.0) {
        let p = baseline();
        let w = Complex64::new(re, im);
        let a = p.matrix(w).map(|z| z.conj());
        let b = p.matrix(mirror(w));
        prop_assert!((a - &b).norm() <= 1e-14 * b.norm());
    }

    #[test]
    fn resolvent_norms_are_ordered(re in 0.3f64..3.0, im in 0.01f64..0.5) {
        let p = baseline();
        let w = Complex64::new(re, im);
        let l2 = p.resolvent_norm(w, Norm::L2).unwrap();
        let b = p.resolvent_norm(w, Norm::H1b).unwrap();
        let h1 = p.resolvent_norm(w, Norm::H1).unwrap();
        prop_assert!(l2 <= b * (1.0 + 1e-9) && b <= h1 * (1.0 + 1e-9));
    }
}

//! The invariant suite run by `horizon verify`, one check per criterion.

use crate::config::RunConfig;
use crate::{commands, CliError};
use horizon_core::carleman::*;
use horizon_core::decay::{assemble_generator, energy_rate, evolve, fit_log_decay, initial_data, DataFamily};
use horizon_core::model::*;
use horizon_core::spectra::*;
use horizon_core::symbol::*;
use nalgebra::DVector;
use num_complex::Complex64;
use ode_solvers::{Dopri5, System, Vector1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Criterion {
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] {:>2} {} ({:.1} s): {}", self.id, self.name, self.seconds, self.detail)
    }
}

pub const NAMES: [&str; 10] = [
    "symbol calculus",
    "Bernoulli extension",
    "hypoellipticity certificate",
    "pseudoconvexity certificate",
    "spectral convergence",
    "resonance-free strip",
    "structural spectral facts",
    "Green's formula",
    "generator and decay",
    "determinism",
];

type Check = Result<(bool, String), String>;

pub fn run(id: u8, cfg: &RunConfig) -> Criterion {
    let start = Instant::now();
    let out: Check = match id {
        1 => symbol_suite(cfg),
        2 => bernoulli_extension(cfg),
        3 => hypoellipticity(cfg),
        4 => pseudoconvexity(cfg),
        5 => spectral_convergence(cfg),
        6 => resonance_free_strip(cfg),
        7 => structural_facts(cfg),
        8 => greens_formula(cfg),
        9 => generator_and_decay(cfg),
        10 => determinism(cfg),
        _ => Err(format!("no criterion {id}")),
    };
    let (passed, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
    Criterion {
        id,
        name: NAMES[(id as usize).clamp(1, 10) - 1],
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all(cfg: &RunConfig) -> Vec<Criterion> {
    (1..=10).map(|id| run(id, cfg)).collect()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn slice(cfg: &RunConfig) -> Result<SliceGeometry, String> {
    build_slice(&cfg.model_spec().map_err(err)?).map_err(err)
}

fn designated(cfg: &RunConfig) -> Result<Normalization, String> {
    let s = slice(cfg)?;
    normalize(&s, default_side(&s.model)).map_err(err)
}

fn with_model(cfg: &RunConfig, v0: f64, ell: u32) -> RunConfig {
    let mut c = cfg.clone();
    c.model.v0 = v0;
    c.model.ell = ell;
    c
}

fn pencil(cfg: &RunConfig, n: usize, scheme: Scheme) -> Result<OperatorPencil, String> {
    discretize(&reduce(&slice(cfg)?), n, scheme).map_err(err)
}

fn weights(cfg: &RunConfig) -> Result<(CarlemanWeight, CarlemanWeight), String> {
    build_weights_with(&designated(cfg)?, cfg.band(), &cfg.density(), &cfg.limits()).map_err(err)
}

fn radial(p: &SymbolPoint) -> f64 {
    p.r
}

fn symbol_suite(cfg: &RunConfig) -> Check {
    let s = slice(cfg)?;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut g0_worst: f64 = 0.0;
    let mut margin = f64::INFINITY;
    for side in s.sides() {
        let sym = CollarSymbol::new(&normalize(&s, side).map_err(err)?);
        for p in sphere_samples(0.95 * sym.collar, 24, 48) {
            let n = p.fibre_norm2().sqrt();
            let g = |q: &SymbolPoint| sym.g(q);
            let gr = |q: &SymbolPoint| sym.g_r(q);
            let fd1 = poisson_bracket(&g, &radial, &p, n * n, p.r).map_err(err)?;
            let fd2 = poisson_bracket(&g, &gr, &p, n * n, n).map_err(err)?;
            worst = worst
                .max((fd1 - sym.g_r(&p)).abs() / sym.g_r(&p).abs().max(n))
                .max((fd2 - sym.g_g_r(&p)).abs() / sym.g_g_r(&p).abs().max(n * n));
            let g0 = |q: &SymbolPoint| sym.g0(q);
            let fd0 = poisson_bracket(&g0, &radial, &p, n * n, p.r).map_err(err)?;
            let exact = -2.0 * (p.r * p.rho + p.tau);
            g0_worst = g0_worst.max((fd0 - exact).abs() / exact.abs().max(n)).max((sym.table(&p).g0_r - exact).abs());
            checked += 1;
        }
        let rep = verify_negligible(&sym, &sphere_samples(0.05, 50, 200), 0.1).map_err(err)?;
        margin = margin.min(rep.margin);
    }
    let ok = checked >= 1000 && worst <= 1e-8 && g0_worst <= 1e-8 && margin >= 0.0;
    Ok((
        ok,
        format!(
            "{checked} points, bracket gap {worst:.1e}, {{G0,r}} gap {g0_worst:.1e}, remainder margin {margin:.3e}"
        ),
    ))
}

struct Bernoulli {
    a: f64,
    r1: f64,
}

/// Integrated in s = R₁ − r so the solver runs forward.
impl System<f64, Vector1<f64>> for Bernoulli {
    fn system(&self, s: f64, k: &Vector1<f64>, dk: &mut Vector1<f64>) {
        dk[0] = -bernoulli_dk(k[0], self.a, self.r1 - s);
    }
}

/// sup |k_ODE − k| over the output grid on [R₀, R₁]. The run continues to
/// 0.9R₀ because the solver's final output point is not reliable.
fn bernoulli_ode_gap(slope: f64, r1: f64, a: f64) -> Result<f64, String> {
    let r0 = bernoulli_r0(slope, r1, a);
    let end = r1 - 0.9 * r0;
    let mut solver = Dopri5::new(Bernoulli { a, r1 }, 0.0, end, end / 200.0, Vector1::new(slope), 1e-14, 1e-14);
    solver.integrate().map_err(err)?;
    let mut worst: f64 = 0.0;
    for (s, k) in solver.x_out().iter().zip(solver.y_out()) {
        let r = r1 - s;
        if r >= r0 {
            worst = worst.max((k[0] - bernoulli_k(slope, r1, a, r).map_err(err)?).abs());
        }
    }
    Ok(worst)
}

fn bernoulli_extension(cfg: &RunConfig) -> Check {
    let (w1, w2) = weights(cfg)?;
    let mut ode: f64 = 0.0;
    let mut turning: f64 = 0.0;
    let mut slack = f64::INFINITY;
    let mut params = vec![(-2.0, 0.5, 1.0)];
    for w in [&w1, &w2] {
        for bp in &w.ends {
            params.push((bp.slope, bp.r1, bp.a));
            slack = slack.min(extension_slack(w, bp, 4000));
        }
    }
    for &(slope, r1, a) in &params {
        ode = ode.max(bernoulli_ode_gap(slope, r1, a)?);
        let r0 = bernoulli_r0(slope, r1, a);
        let k = bernoulli_k(slope, r1, a, r0).map_err(err)?;
        turning = turning.max(bernoulli_dk(k, a, r0).abs() * r0 / k.abs());
    }
    let ok = ode <= 1e-10 && turning <= 1e-8 && slack >= 0.0;
    Ok((ok, format!("ODE sup gap {ode:.1e}, k'(R0) {turning:.1e}, extension slack {slack:.3e}")))
}

fn hypoellipticity(cfg: &RunConfig) -> Check {
    let (w1, w2) = weights(cfg)?;
    let mut detail = Vec::new();
    let mut ok = true;
    for w in [&w1, &w2] {
        let rep = certify_hypoellipticity(w, &cfg.density()).map_err(err)?;
        ok &= rep.margin > 0.0 && rep.samples >= 10_000;
        detail.push(format!("φ{}: α {}, margin {:.3e} on {} samples", rep.index, rep.alpha, rep.margin, rep.samples));
    }
    Ok((ok, detail.join("; ")))
}

fn pseudoconvexity(cfg: &RunConfig) -> Check {
    let norm = designated(cfg)?;
    let cert = certify_pseudoconvexity(&norm, &SampleDensity::default()).map_err(err)?;
    let k0 = norm.k0_ang();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gap: f64 = 0.0;
    for _ in 0..1000 {
        let r = rng.gen_range(0.0..cert.r0);
        let rho = rng.gen_range(-10.0..10.0);
        let p = SymbolPoint::new(r, rho, 0.0, 0.0);
        let e = pseudoconvex_e0(&p, k0, cert.m, cert.delta);
        let exact = cert.delta * cert.m * (r * rho).powi(2);
        gap = gap.max((e - exact).abs() / exact.abs().max(1.0));
    }
    let ok = cert.c > 0.0 && gap <= 1e-12;
    Ok((ok, format!("M {}, δ {}, c {:.3e}, R0 {:.4}, identity gap {gap:.1e}", cert.m, cert.delta, cert.c, cert.r0)))
}

/// Lowest converged resonances at N = 128, counting mirror partners separately.
fn lowest_five(cfg: &RunConfig) -> Result<Vec<Complex64>, String> {
    let p = pencil(cfg, 128, Scheme::Collocation)?;
    let window = Window { re_min: -2.0, re_max: 2.0, im_min: -0.6, im_max: 0.0 };
    let set = resonances(&p, &window).map_err(err)?;
    Ok(set.converged().take(5).map(|r| r.omega).collect())
}

fn spectral_convergence(cfg: &RunConfig) -> Check {
    let lowest = lowest_five(cfg)?;
    if lowest.len() < 5 {
        return Ok((false, format!("only {} converged resonances", lowest.len())));
    }
    let fine = pencil(cfg, 256, Scheme::Collocation)?;
    let fd = pencil(cfg, 512, Scheme::FiniteDifference4)?;
    let gap = |p: &OperatorPencil, w: Complex64| {
        p.refine(w, 1e-2 * w.norm(), 30).map_or(f64::INFINITY, |r| (r.omega - w).norm() / w.norm())
    };
    let doubling: Vec<f64> = lowest.iter().map(|&w| gap(&fine, w)).collect();
    let cross: Vec<f64> = lowest.iter().map(|&w| gap(&fd, w)).collect();
    let ok = doubling.iter().all(|&d| d <= 1e-6) && cross.iter().all(|&d| d <= 1e-4);
    let fmt = |v: &[f64]| v.iter().map(|d| format!("{d:.1e}")).collect::<Vec<_>>().join(" ");
    Ok((ok, format!("N 128 vs 256: [{}]; collocation vs FD4 N 512: [{}]", fmt(&doubling), fmt(&cross))))
}

fn resonance_free_strip(cfg: &RunConfig) -> Check {
    let p = pencil(cfg, cfg.discretization.n, cfg.discretization.scheme)?;
    let f = &cfg.frequency;
    let res = scan_strip(&p, cfg.band(), &f.h_list, f.points_per_h, cfg.depth()).map_err(err)?;
    let re: Vec<f64> = res.points.iter().map(|q| q.re_omega).collect();
    let span = re.iter().cloned().fold(0.0, f64::max) / re.iter().cloned().fold(f64::INFINITY, f64::min);
    let c0 = res.c0_threshold;
    let in_strip = res
        .resonances
        .iter()
        .filter(|r| r.converged && r.omega.norm() > res.omega0)
        .filter(|r| r.omega.im.abs() <= (-c0 * r.omega.re.abs()).exp() * (1.0 - 1e-9))
        .count();
    let ok = span >= 10.0 && res.fit.slope.is_finite() && !res.fit.superlinear() && in_strip == 0 && res.verdict;
    Ok((
        ok,
        format!(
            "Re ω span ×{span:.1}, slope {:.4}, residual ratio {:.2}, C0 {c0:.4}, ω0 {:.3}, {in_strip} in strip",
            res.fit.slope,
            res.fit.residual_linear / res.fit.residual_quadratic,
            res.omega0
        ),
    ))
}

fn structural_facts(cfg: &RunConfig) -> Check {
    let n = cfg.discretization.n;
    let p = pencil(cfg, n, Scheme::Collocation)?;
    let upper = Window { re_min: -2.0, re_max: 2.0, im_min: -0.6, im_max: 2.0 };
    let set = resonances(&p, &upper).map_err(err)?;
    let conv: Vec<Complex64> = set.converged().map(|r| r.omega).collect();
    let real = conv.iter().filter(|w| w.im.abs() < 1e-8).count();
    // invertibility threshold: top of the converged spectrum
    let threshold = conv.iter().map(|w| w.im).fold(f64::NEG_INFINITY, f64::max);
    let probes_finite = [0.05, 0.25, 1.0].iter().all(|&y| {
        [0.3, 1.0, 3.0].iter().all(|&x| p.resolvent_norm(Complex64::new(x, y), Norm::H1).is_ok_and(|v| v.is_finite()))
    });
    let zero_cfg = with_model(cfg, 0.0, 0);
    let pz = pencil(&zero_cfg, n, Scheme::Collocation)?;
    let near = Window { re_min: -0.5, re_max: 0.5, im_min: -0.1, im_max: 0.1 };
    let zero = resonances(&pz, &near).map_err(err)?.converged().map(|r| r.omega.norm()).fold(f64::INFINITY, f64::min);
    let ok = cfg.model.v0 > 0.0 && real == 0 && zero < 1e-8 && threshold < 0.0 && probes_finite;
    Ok((
        ok,
        format!("{real} real-axis resonances, zero mode |ω| {zero:.1e}, threshold Im ω {threshold:.4}, upper probes finite {probes_finite}"),
    ))
}

fn smooth(p: &OperatorPencil, a: &[f64]) -> DVector<Complex64> {
    DVector::from_fn(p.len(), |i, _| {
        let x = p.grid.x[i];
        Complex64::new(a[0] * (a[1] * x).sin() + a[2], a[3] * (x - 0.3).powi(2) * (a[4] * x).cos())
    })
}

fn greens_formula(cfg: &RunConfig) -> Check {
    let coeffs = reduce(&slice(cfg)?);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let residual = |n: usize, scheme, a: &[f64], z: f64| -> Result<f64, String> {
        let p = discretize(&coeffs, n, scheme).map_err(err)?;
        let u = smooth(&p, a);
        let (lhs, _) = p.greens_sides(&u, z, 1.0);
        Ok(p.greens_identity_residual(&u, z, 1.0) / lhs.abs().max(1.0))
    };
    let mut min_order = f64::INFINITY;
    let mut colloc: f64 = 0.0;
    for _ in 0..10 {
        let a: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (e1, e2) =
            (residual(32, Scheme::FiniteDifference4, &a, 1.0)?, residual(64, Scheme::FiniteDifference4, &a, 1.0)?);
        min_order = min_order.min((e1 / e2).log2());
        colloc = colloc.max(residual(32, Scheme::Collocation, &a, 1.0)?);
    }
    let mut real: f64 = 0.0;
    for scheme in [Scheme::Collocation, Scheme::FiniteDifference4] {
        let p = discretize(&coeffs, 40, scheme).map_err(err)?;
        let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).chain([0.0, 0.0]).collect();
        real = real.max(p.greens_identity_residual(&smooth(&p, &a), 0.0, 1.0));
    }
    let ok = min_order >= 3.3 && colloc < 1e-12 && real < 1e-12;
    Ok((ok, format!("FD4 order ≥ {min_order:.2}, collocation residual {colloc:.1e}, real u at z = 0 {real:.1e}")))
}

fn generator_and_decay(cfg: &RunConfig) -> Check {
    let p = pencil(cfg, 48, Scheme::Collocation)?;
    let gen = assemble_generator(&p);
    let window = Window { re_min: -1.0, re_max: 1.0, im_min: -0.5, im_max: 0.0 };
    let mut eig: f64 = 0.0;
    for r in resonances(&p, &window).map_err(err)?.converged() {
        let b = gen.refine_eigenvalue(gen.nearest(r.omega)).ok_or("eigenvalue refinement failed")?;
        eig = eig.max((b - r.omega).norm() / r.omega.norm());
    }
    let dt = gen.stable_step();
    let mode = initial_data(&p, &gen, DataFamily::Mode).map_err(err)?;
    let omega = gen.slowest();
    let tr = evolve(&gen, &mode, 200.0, dt, true).map_err(err)?;
    let rate = energy_rate(&tr, 1.0, 200.0);
    let rate_gap = (rate - 2.0 * omega.im).abs() / (2.0 * omega.im).abs();
    let smooth = initial_data(&p, &gen, DataFamily::default()).map_err(err)?;
    let rep = fit_log_decay(&gen, &evolve(&gen, &smooth, 1000.0, dt, true).map_err(err)?).map_err(err)?;
    let ok = eig <= 1e-6 && rate_gap <= 1e-3 && rep.c_fit.is_finite() && rep.bounded;
    Ok((
        ok,
        format!(
            "eigenvalue gap {eig:.1e}, mode rate gap {rate_gap:.1e}, C {:.4}, sup √(E/E0) {:.3}",
            rep.c_fit, rep.c_bounded
        ),
    ))
}

fn determinism(cfg: &RunConfig) -> Check {
    let base = std::env::temp_dir().join(format!("horizon-determinism-{}", std::process::id()));
    let run = |k: usize| -> Result<Vec<(String, Vec<u8>)>, CliError> {
        let mut c = cfg.clone();
        c.output.dir = base.join(k.to_string());
        c.decay.t_final = 100.0;
        commands::cmd_qnm(&c)?;
        commands::cmd_decay(&c)?;
        commands::cmd_scan(&c)?;
        ["resonances.csv", "slice.csv", "decay.csv", "scan.csv"]
            .iter()
            .map(|f| Ok((f.to_string(), std::fs::read(c.output.dir.join(f))?)))
            .collect()
    };
    let a = run(0).map_err(err)?;
    let b = run(1).map_err(err)?;
    let _ = std::fs::remove_dir_all(&base);
    let differing: Vec<&str> = a.iter().zip(&b).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.as_str()).collect();
    Ok((differing.is_empty(), format!("{} files compared, differing: {differing:?}", a.len())))
}

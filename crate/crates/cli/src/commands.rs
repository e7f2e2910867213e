//! Subcommand pipelines. Each writes its artifacts into `cfg.output.dir`.

use crate::config::RunConfig;
use crate::output::{num, write_csv, write_json, write_plot_script};
use crate::{compute_err, criteria, CliError, Outcome};
use horizon_core::carleman::{
    build_weights_with, certify_hypoellipticity, certify_pseudoconvexity, extension_slack, ordering_gap, profile_table,
    pseudoconvex_at, BoundaryProfile, CarlemanWeight, HypoReport, PseudoconvexCertificate,
};
use horizon_core::decay::{assemble_generator, evolve, fit_log_decay, initial_data};
use horizon_core::model::{build_slice, default_side, normalize, reduce, Normalization, Side, SliceGeometry};
use horizon_core::spectra::{discretize, resonances, scan_strip, OperatorPencil, StripFit};
use horizon_core::symbol::{sphere_samples, CollarSymbol};
use num_complex::Complex64;
use serde::Serialize;
use std::path::Path;

fn prepare(cfg: &RunConfig) -> Result<&Path, CliError> {
    let dir = cfg.output.dir.as_path();
    std::fs::create_dir_all(dir)?;
    Ok(dir)
}

fn slice(cfg: &RunConfig) -> Result<SliceGeometry, CliError> {
    build_slice(&cfg.model_spec()?).map_err(compute_err)
}

fn pencil(cfg: &RunConfig) -> Result<OperatorPencil, CliError> {
    let d = &cfg.discretization;
    discretize(&reduce(&slice(cfg)?), d.n, d.scheme).map_err(compute_err)
}

fn normalization(s: &SliceGeometry) -> Result<Normalization, CliError> {
    normalize(s, default_side(&s.model)).map_err(compute_err)
}

/// Slice data on a uniform x grid.
pub fn write_slice_csv(path: &Path, s: &SliceGeometry, rows: usize) -> Result<(), CliError> {
    let norm = normalization(s)?;
    let dist = |side: Side, x: f64| if s.sides().contains(&side) { s.distance(side, x) } else { f64::NAN };
    let body: Vec<Vec<String>> = (0..=rows)
        .map(|i| {
            let x = i as f64 / rows as f64;
            let rt = s.rt(x);
            [
                x,
                rt,
                s.lapse(rt),
                s.shift(rt),
                s.k_rr(rt),
                s.k_sphere(rt),
                dist(Side::Event, x),
                dist(Side::Cosmological, x),
                norm.conformal(rt),
            ]
            .map(num)
            .to_vec()
        })
        .collect();
    write_csv(path, &["x", "r̃", "A", "W", "k_rr", "k_sphere", "r_left", "r_right", "conformal"], &body)
}

pub fn cmd_qnm(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = prepare(cfg)?;
    let p = pencil(cfg)?;
    let set = resonances(&p, &cfg.frequency.window).map_err(compute_err)?;
    let rows: Vec<Vec<String>> = set
        .items
        .iter()
        .map(|r| vec![num(r.omega.re), num(r.omega.im), num(r.residual), r.converged.to_string()])
        .collect();
    write_csv(&dir.join("resonances.csv"), &["re", "im", "residual", "converged"], &rows)?;
    write_slice_csv(&dir.join("slice.csv"), &p.coeffs.slice, 200)?;
    write_plot_script(dir, "plot_resonances.py", "resonances.csv", "re", &["im"], false)?;
    let conv = set.converged().count();
    Ok(Outcome { code: 0, summary: format!("{} resonances in window, {conv} converged", set.items.len()) })
}

#[derive(Serialize)]
struct ScanVerdict {
    fit: StripFit,
    superlinear: bool,
    c_bound: f64,
    c0_threshold: f64,
    omega0: f64,
    real_axis: Vec<Complex64>,
    converged_resonances: usize,
    perturbation_ratio: f64,
    b_bound: f64,
    growth_at_most_linear: bool,
    resonance_free_strip: bool,
    verdict: bool,
}

pub fn cmd_scan(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = prepare(cfg)?;
    let p = pencil(cfg)?;
    let f = &cfg.frequency;
    let res = scan_strip(&p, cfg.band(), &f.h_list, f.points_per_h, cfg.depth()).map_err(compute_err)?;
    let rows: Vec<Vec<String>> =
        res.points.iter().map(|q| [q.re_omega, q.im_omega, q.norm, q.h, q.z].map(num).to_vec()).collect();
    write_csv(&dir.join("scan.csv"), &["re_omega", "im_omega", "norm", "h", "z"], &rows)?;
    let v = ScanVerdict {
        fit: res.fit,
        superlinear: res.fit.superlinear(),
        c_bound: res.c_bound,
        c0_threshold: res.c0_threshold,
        omega0: res.omega0,
        real_axis: res.real_axis.clone(),
        converged_resonances: res.resonances.iter().filter(|r| r.converged).count(),
        perturbation_ratio: res.perturbation_ratio,
        b_bound: res.b_bound,
        growth_at_most_linear: res.growth_at_most_linear,
        resonance_free_strip: res.real_axis.is_empty() && res.c0_threshold.is_finite(),
        verdict: res.verdict,
    };
    write_json(&dir.join("verdict.json"), &v)?;
    write_plot_script(dir, "plot_scan.py", "scan.csv", "re_omega", &["norm"], true)?;
    Ok(Outcome {
        code: 0,
        summary: format!(
            "verdict {}: slope {:.4}, C = {:.4}, C0 > {:.4}",
            res.verdict, res.fit.slope, res.c_bound, res.c0_threshold
        ),
    })
}

#[derive(Serialize)]
struct WeightReport {
    index: usize,
    alpha: f64,
    ends: Vec<BoundaryProfile>,
    extension_slack: Vec<f64>,
    hypoellipticity: HypoReport,
}

#[derive(Serialize)]
struct Certificate {
    ok: bool,
    band: (f64, f64),
    forced: bool,
    #[serde(flatten)]
    pseudoconvexity: PseudoconvexCertificate,
    ordering_gap: f64,
    weights: Vec<WeightReport>,
}

/// θ_ε of `w` in the boundary coordinate u of the nearer end: φ′(r)·dr/du.
fn theta_eps_at(w: &CarlemanWeight, r: f64) -> f64 {
    let bp = w
        .ends
        .iter()
        .min_by(|a, b| w.chart.u(a.end, r).total_cmp(&w.chart.u(b.end, r)))
        .expect("extended weight has boundary pieces");
    w.dphi(r) * w.chart.dr_du(bp.end)
}

pub fn cmd_carleman(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = prepare(cfg)?;
    let s = slice(cfg)?;
    let norm = normalization(&s)?;
    let density = cfg.density();
    let (w1, w2) = build_weights_with(&norm, cfg.band(), &density, &cfg.limits()).map_err(compute_err)?;

    let rows: Vec<Vec<String>> = profile_table(&w1, &w2, cfg.carleman.profile_rows)
        .iter()
        .map(|&[r, p1, p2, _]| [r, p1, p2, theta_eps_at(&w1, r)].map(num).to_vec())
        .collect();
    write_csv(&dir.join("carleman.csv"), &["r", "phi1", "phi2", "theta_eps"], &rows)?;

    let sym = CollarSymbol::new(&norm);
    let brackets: Vec<Vec<String>> = sphere_samples(sym.collar, 8, 24)
        .iter()
        .map(|p| {
            let t = sym.table(p);
            [p.r, p.rho, p.tau, p.eta, t.g, t.g0, t.y, t.z, t.g_r, t.g_g_r, t.f, t.h].map(num).to_vec()
        })
        .collect();
    let header = ["r", "ρ", "τ", "η", "G", "G0", "Y", "Z", "bG_r", "bG_bG_r", "F", "H"];
    write_csv(&dir.join("brackets.csv"), &header, &brackets)?;
    write_plot_script(dir, "plot_carleman.py", "carleman.csv", "r", &["phi1", "phi2"], false)?;

    let mut weights = Vec::new();
    for w in [&w1, &w2] {
        weights.push(WeightReport {
            index: w.index,
            alpha: w.alpha,
            ends: w.ends.clone(),
            extension_slack: w.ends.iter().map(|bp| extension_slack(w, bp, 4000)).collect(),
            hypoellipticity: certify_hypoellipticity(w, &density).map_err(compute_err)?,
        });
    }
    let forced = cfg.carleman.m.zip(cfg.carleman.delta);
    let pc = match forced {
        Some((m, delta)) => pseudoconvex_at(&norm, m, delta, &density),
        None => certify_pseudoconvexity(&norm, &density).map_err(compute_err)?,
    };
    let ok = pc.c > 0.0 && weights.iter().all(|w| w.extension_slack.iter().all(|&x| x >= 0.0));
    let cert = Certificate {
        ok,
        band: cfg.band(),
        forced: forced.is_some(),
        pseudoconvexity: pc.clone(),
        ordering_gap: ordering_gap(&w1, &w2),
        weights,
    };
    write_json(&dir.join("certificate.json"), &cert)?;
    if !ok {
        return Err(CliError::Compute(format!(
            "certificate fails: M = {}, δ = {}, c = {:e} at r = {}; see certificate.json",
            pc.m, pc.delta, pc.c, pc.worst_point.r
        )));
    }
    Ok(Outcome {
        code: 0,
        summary: format!(
            "certificate ok: α = ({}, {}), M = {}, δ = {}, c = {:e}",
            w1.alpha, w2.alpha, pc.m, pc.delta, pc.c
        ),
    })
}

#[derive(Serialize)]
struct DecaySummary {
    dt: f64,
    t_final: f64,
    slowest: Complex64,
    data_norm: f64,
    energy_norm: f64,
    c_fit: f64,
    c_bounded: f64,
    bounded: bool,
    log_decay: bool,
}

pub fn cmd_decay(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = prepare(cfg)?;
    let p = pencil(cfg)?;
    let gen = assemble_generator(&p);
    let d = &cfg.decay;
    let data = initial_data(&p, &gen, d.data).map_err(compute_err)?;
    let dt = d.dt.unwrap_or_else(|| gen.stable_step());
    let damped = cfg.model.v0 > 0.0;
    let traj = evolve(&gen, &data, d.t_final, dt, damped).map_err(compute_err)?;
    let rep = fit_log_decay(&gen, &traj).map_err(compute_err)?;
    let rows: Vec<Vec<String>> = (0..rep.times.len())
        .map(|k| [rep.times[k], rep.energy[k], rep.envelope[k].powi(2)].map(num).to_vec())
        .collect();
    write_csv(&dir.join("decay.csv"), &["t", "energy", "bound_envelope"], &rows)?;
    let summary = DecaySummary {
        dt: traj.dt,
        t_final: d.t_final,
        slowest: gen.slowest(),
        data_norm: rep.data_norm,
        energy_norm: rep.energy_norm,
        c_fit: rep.c_fit,
        c_bounded: rep.c_bounded,
        bounded: rep.bounded,
        log_decay: rep.log_decay,
    };
    write_json(&dir.join("decay.json"), &summary)?;
    write_plot_script(dir, "plot_decay.py", "decay.csv", "t", &["energy", "bound_envelope"], true)?;
    Ok(Outcome {
        code: 0,
        summary: format!("C = {:.6}, bounded {}, log decay {}", rep.c_fit, rep.bounded, rep.log_decay),
    })
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = prepare(cfg)?;
    let results = criteria::run_all(cfg);
    for c in &results {
        println!("{}", c.line());
    }
    write_json(&dir.join("verify.json"), &results)?;
    let failed: Vec<u8> = results.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    Ok(if failed.is_empty() {
        Outcome { code: 0, summary: format!("all {} criteria pass", results.len()) }
    } else {
        Outcome { code: 3, summary: format!("failed criteria: {failed:?}") }
    })
}

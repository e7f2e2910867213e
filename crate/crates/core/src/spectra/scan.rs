//! Resolvent scan along and just off the real axis.

use super::{resonances, Norm, OperatorPencil, Resonance, SpectraError, Window};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

/// Depths Im ω = ±e^{−C₁ Re ω} probed next to each real sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthProfile {
    pub c1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub re_omega: f64,
    pub im_omega: f64,
    pub norm: f64,
    pub h: f64,
    pub z: f64,
}

/// Least-squares fits of log‖P(ω)⁻¹‖ against Re ω on the real samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StripFit {
    pub intercept: f64,
    pub slope: f64,
    /// Leading coefficient of the quadratic fit.
    pub curvature: f64,
    pub residual_linear: f64,
    pub residual_quadratic: f64,
}

impl StripFit {
    /// Super-linear growth: positive curvature that improves the fit tenfold.
    pub fn superlinear(&self) -> bool {
        self.curvature > 0.0 && self.residual_linear >= 10.0 * self.residual_quadratic
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
    pub fit: StripFit,
    /// Smallest C with ‖P(ω)⁻¹‖ ≤ e^{C|Re ω|} on every sample.
    pub c_bound: f64,
    /// No converged resonance with |ω| > ω₀ lies in |Im ω| ≤ e^{−C₀|Re ω|} for C₀ above this.
    pub c0_threshold: f64,
    pub omega0: f64,
    pub resonances: Vec<Resonance>,
    /// Converged resonances with |Im ω| below 1e−8.
    pub real_axis: Vec<Complex64>,
    /// max ‖P(ω) − P(Re ω)‖ / (|Im ω|·‖B(ω)‖) over depth samples (Frobenius norms).
    pub perturbation_ratio: f64,
    /// max ‖B(ω)‖ over depth samples.
    pub b_bound: f64,
    pub growth_at_most_linear: bool,
    pub verdict: bool,
}

fn lstsq(x: &[f64], y: &[f64], degree: usize) -> (Vec<f64>, f64) {
    let m = x.len();
    let a = nalgebra::DMatrix::from_fn(m, degree + 1, |i, j| x[i].powi(j as i32));
    let b = nalgebra::DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let c = svd.solve(&b, 1e-14).expect("svd solve");
    let r = (&a * &c - &b).norm();
    (c.iter().cloned().collect(), r)
}

pub fn fit_log_norms(re: &[f64], log_norm: &[f64]) -> Result<StripFit, SpectraError> {
    if re.len() < 4 {
        return Err(SpectraError::Fit(re.len()));
    }
    let (lin, rl) = lstsq(re, log_norm, 1);
    let (quad, rq) = lstsq(re, log_norm, 2);
    Ok(StripFit { intercept: lin[0], slope: lin[1], curvature: quad[2], residual_linear: rl, residual_quadratic: rq })
}

/// Evaluate ‖P(ω)⁻¹‖_{L²→H¹} at ω = z/h for z on a geometric grid over the
/// band, for every h, plus the two depth samples; fit the growth and locate
/// converged resonances relative to the strip.
pub fn scan_strip(
    pencil: &OperatorPencil,
    band: (f64, f64),
    h_list: &[f64],
    points_per_h: usize,
    depth: DepthProfile,
) -> Result<ScanResult, SpectraError> {
    let (a, b) = band;
    let mut samples = Vec::new();
    for &h in h_list {
        for k in 0..points_per_h {
            let t = if points_per_h == 1 { 0.0 } else { k as f64 / (points_per_h - 1) as f64 };
            let z = a * (b / a).powf(t);
            let re = z / h;
            let d = (-depth.c1 * re).exp();
            for im in [0.0, d, -d] {
                samples.push((h, z, Complex64::new(re, im)));
            }
        }
    }
    let points: Vec<ScanPoint> = samples
        .par_iter()
        .map(|&(h, z, w)| {
            let norm = pencil.resolvent_norm(w, Norm::H1).unwrap_or(f64::INFINITY);
            ScanPoint { re_omega: w.re, im_omega: w.im, norm, h, z }
        })
        .collect();
    let real: Vec<&ScanPoint> = points.iter().filter(|p| p.im_omega == 0.0 && p.norm.is_finite()).collect();
    let xs: Vec<f64> = real.iter().map(|p| p.re_omega).collect();
    let ys: Vec<f64> = real.iter().map(|p| p.norm.ln()).collect();
    let fit = fit_log_norms(&xs, &ys)?;
    let c_bound = points.iter().map(|p| p.norm.ln() / p.re_omega.abs()).fold(f64::NEG_INFINITY, f64::max);

    let omega0 = points.iter().map(|p| p.re_omega.abs()).fold(f64::INFINITY, f64::min);
    let re_max = points.iter().map(|p| p.re_omega.abs()).fold(0.0, f64::max);
    let window = Window { re_min: -re_max, re_max, im_min: -1.0, im_max: 1.0 };
    let set = resonances(pencil, &window)?;
    let converged: Vec<&Resonance> = set.items.iter().filter(|r| r.converged).collect();
    let real_axis: Vec<Complex64> = converged.iter().filter(|r| r.omega.im.abs() < 1e-8).map(|r| r.omega).collect();
    let c0_threshold = converged
        .iter()
        .filter(|r| r.omega.norm() > omega0)
        .map(|r| -r.omega.im.abs().ln() / r.omega.re.abs())
        .fold(0.0, f64::max);

    let mut perturbation_ratio: f64 = 0.0;
    let mut b_bound: f64 = 0.0;
    for p in points.iter().filter(|p| p.im_omega != 0.0) {
        let w = Complex64::new(p.re_omega, p.im_omega);
        let diff = pencil.matrix(w) - pencil.matrix(Complex64::from(w.re));
        let coef = Complex64::new(-w.im, 2.0 * w.re);
        let mut bm = pencil.k1.map(Complex64::from);
        for j in 0..pencil.len() {
            bm[(j, j)] += coef * pencil.k2[j];
        }
        let bn = bm.norm();
        b_bound = b_bound.max(bn);
        perturbation_ratio = perturbation_ratio.max(diff.norm() / (w.im.abs() * bn));
    }

    let growth_at_most_linear = !fit.superlinear() && fit.slope.is_finite();
    let verdict = growth_at_most_linear && real_axis.is_empty() && c0_threshold.is_finite();
    Ok(ScanResult {
        points,
        fit,
        c_bound,
        c0_threshold,
        omega0,
        resonances: set.items,
        real_axis,
        perturbation_ratio,
        b_bound,
        growth_at_most_linear,
        verdict,
    })
}

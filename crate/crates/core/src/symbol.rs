//! Stationary symbol calculus near a horizon in normal-form coordinates.
//!
//! In the collar coordinates (t, r, y) of the designated horizon the
//! normalized dual metric is
//!
//! G = τ² + 2Ĥ(r)τρ − (1 − Ĥ(r)²)ρ² − κ_ang(r)η²,
//!
//! with Ĥ(0) = −1, Ĥ′(0) = 1/2, so G(dr) = −r + O(r²). Brackets are taken in
//! the (r, ρ) pair: {F₁, F₂} = ∂_ρF₁ ∂_rF₂ − ∂_rF₁ ∂_ρF₂.

use crate::model::Normalization;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolError {
    #[error("chart-domain error: r = {0} outside the collar")]
    Chart(f64),
    #[error("step underflow: finite differences reached error {err:e} > {tol:e}")]
    StepUnderflow { err: f64, tol: f64 },
    #[error("verification failure at {point:?}")]
    Verification { point: SymbolPoint },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolPoint {
    pub r: f64,
    pub rho: f64,
    pub tau: f64,
    pub eta: f64,
}

impl SymbolPoint {
    pub fn new(r: f64, rho: f64, tau: f64, eta: f64) -> Self {
        SymbolPoint { r, rho, tau, eta }
    }
    /// Same base point, fibre scaled by λ.
    pub fn scaled(&self, l: f64) -> Self {
        SymbolPoint { r: self.r, rho: l * self.rho, tau: l * self.tau, eta: l * self.eta }
    }
    pub fn fibre_norm2(&self) -> f64 {
        self.rho * self.rho + self.tau * self.tau + self.eta * self.eta
    }
}

/// G₀ = −rρ² − 2ρτ − k0·η².
pub fn eval_g0(p: &SymbolPoint, k0_ang: f64) -> f64 {
    -p.r * p.rho * p.rho - 2.0 * p.rho * p.tau - k0_ang * p.eta * p.eta
}

/// Y = (rρ)² + τ², Z = rρ² + k_ang·η².
pub fn eval_yz(p: &SymbolPoint, k_ang: f64) -> (f64, f64) {
    let rr = p.r * p.rho;
    (rr * rr + p.tau * p.tau, p.r * p.rho * p.rho + k_ang * p.eta * p.eta)
}

/// Closed-form bracket values at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BracketTable {
    pub point: SymbolPoint,
    pub g: f64,
    pub g0: f64,
    pub y: f64,
    pub z: f64,
    pub g_r: f64,
    pub g_g_r: f64,
    pub g0_r: f64,
    pub g0_g0_r: f64,
    /// {G,r} + 2(rρ + τ).
    pub f: f64,
    /// {G,{G,r}} − 2(rρ² + 2τρ).
    pub h: f64,
}

/// Normalized symbol data of one horizon collar.
#[derive(Debug, Clone)]
pub struct CollarSymbol {
    pub norm: Normalization,
    pub k0: f64,
    pub collar: f64,
}

impl CollarSymbol {
    pub fn new(norm: &Normalization) -> Self {
        CollarSymbol { k0: norm.k0_ang(), collar: norm.collar(), norm: norm.clone() }
    }

    fn check(&self, r: f64) -> Result<(), SymbolError> {
        if r.is_finite() && r <= self.collar && r > -0.5 * self.collar {
            Ok(())
        } else {
            Err(SymbolError::Chart(r))
        }
    }

    pub fn k_ang(&self, r: f64) -> f64 {
        self.norm.k_ang(r)
    }

    /// G as A^{-2}(τ − W·ξ)² − k^{ij}ξ_iξ_j with A = 1, W^r = −Ĥ, k^{rr} = 1.
    pub fn g(&self, p: &SymbolPoint) -> f64 {
        let w = -self.norm.h_hat(p.r);
        let a = p.tau - w * p.rho;
        a * a - p.rho * p.rho - self.norm.k_ang(p.r) * p.eta * p.eta
    }

    pub fn eval_g(&self, p: &SymbolPoint) -> Result<f64, SymbolError> {
        self.check(p.r)?;
        Ok(self.g(p))
    }

    pub fn g0(&self, p: &SymbolPoint) -> f64 {
        eval_g0(p, self.k0)
    }

    /// {G, r} = ∂_ρG.
    pub fn g_r(&self, p: &SymbolPoint) -> f64 {
        let h = self.norm.h_hat(p.r);
        2.0 * h * p.tau - 2.0 * (1.0 - h * h) * p.rho
    }

    /// {G, {G, r}} from hand-coded r-derivatives of Ĥ and κ_ang.
    pub fn g_g_r(&self, p: &SymbolPoint) -> f64 {
        let h = self.norm.h_hat(p.r);
        let dh = self.norm.dh_hat(p.r);
        let dk = self.norm.dk_ang(p.r);
        let (rho, tau, eta) = (p.rho, p.tau, p.eta);
        let gr = 2.0 * h * tau - 2.0 * (1.0 - h * h) * rho;
        let dr_gr = 2.0 * dh * tau + 4.0 * h * dh * rho;
        let dr_g = 2.0 * dh * tau * rho + 2.0 * h * dh * rho * rho - dk * eta * eta;
        gr * dr_gr + 2.0 * (1.0 - h * h) * dr_g
    }

    pub fn f_remainder(&self, p: &SymbolPoint) -> f64 {
        self.g_r(p) + 2.0 * (p.r * p.rho + p.tau)
    }

    pub fn h_remainder(&self, p: &SymbolPoint) -> f64 {
        self.g_g_r(p) - 2.0 * (p.r * p.rho * p.rho + 2.0 * p.tau * p.rho)
    }

    pub fn table(&self, p: &SymbolPoint) -> BracketTable {
        let (y, z) = eval_yz(p, self.k_ang(p.r));
        BracketTable {
            point: *p,
            g: self.g(p),
            g0: self.g0(p),
            y,
            z,
            g_r: self.g_r(p),
            g_g_r: self.g_g_r(p),
            g0_r: -2.0 * (p.r * p.rho + p.tau),
            g0_g0_r: 2.0 * (p.r * p.rho * p.rho + 2.0 * p.tau * p.rho),
            f: self.f_remainder(p),
            h: self.h_remainder(p),
        }
    }
}

/// Ridders' extrapolated central difference of `f` at `x`, starting from step
/// `h0`. Returns (derivative, error estimate).
pub fn ridders(f: &dyn Fn(f64) -> f64, x: f64, h0: f64) -> (f64, f64) {
    const NTAB: usize = 10;
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    let mut a = [[0.0f64; NTAB]; NTAB];
    let mut h = h0;
    a[0][0] = (f(x + h) - f(x - h)) / (2.0 * h);
    let mut ans = a[0][0];
    let mut err = f64::INFINITY;
    for i in 1..NTAB {
        h /= CON;
        a[0][i] = (f(x + h) - f(x - h)) / (2.0 * h);
        let mut fac = CON2;
        for j in 1..=i {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= CON2;
            let e = (a[j][i] - a[j - 1][i]).abs().max((a[j][i] - a[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                ans = a[j][i];
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    (ans, err)
}

/// Relative tolerance requested from [`poisson_bracket`].
pub const BRACKET_TOL: f64 = 1e-9;

fn checked(d: (f64, f64), scale: f64) -> Result<f64, SymbolError> {
    let tol = BRACKET_TOL * scale.max(1e-300);
    if d.1 <= tol {
        Ok(d.0)
    } else {
        Err(SymbolError::StepUnderflow { err: d.1, tol })
    }
}

/// Partial derivatives (∂_r, ∂_ρ) of a symbol function by Ridders differences.
pub fn gradient(f: &dyn Fn(&SymbolPoint) -> f64, p: &SymbolPoint, scale: f64) -> Result<(f64, f64), SymbolError> {
    gradient_with_step(f, p, scale, 1e-2 * p.r.abs().max(0.1))
}

/// [`gradient`] with an explicit initial r step, for functions that vary on
/// a scale finer than r.
pub fn gradient_with_step(
    f: &dyn Fn(&SymbolPoint) -> f64,
    p: &SymbolPoint,
    scale: f64,
    h_r: f64,
) -> Result<(f64, f64), SymbolError> {
    let fib = p.fibre_norm2().sqrt().max(1e-300);
    let dr = ridders(&|r| f(&SymbolPoint { r, ..*p }), p.r, h_r);
    let drho = ridders(&|rho| f(&SymbolPoint { rho, ..*p }), p.rho, 1e-2 * fib);
    Ok((checked(dr, scale)?, checked(drho, scale / fib)?))
}

/// {F₁, F₂}(p) = ∂_ρF₁ ∂_rF₂ − ∂_rF₁ ∂_ρF₂ by finite differences.
/// `scale1`/`scale2` are magnitudes of F₁/F₂ near p used for the error check.
pub fn poisson_bracket(
    f1: &dyn Fn(&SymbolPoint) -> f64,
    f2: &dyn Fn(&SymbolPoint) -> f64,
    p: &SymbolPoint,
    scale1: f64,
    scale2: f64,
) -> Result<f64, SymbolError> {
    let (r1, rho1) = gradient(f1, p, scale1)?;
    let (r2, rho2) = gradient(f2, p, scale2)?;
    Ok(rho1 * r2 - r1 * rho2)
}

/// [`poisson_bracket`] with an explicit initial r step.
pub fn poisson_bracket_with_step(
    f1: &dyn Fn(&SymbolPoint) -> f64,
    f2: &dyn Fn(&SymbolPoint) -> f64,
    p: &SymbolPoint,
    scales: (f64, f64),
    h_r: f64,
) -> Result<f64, SymbolError> {
    let (r1, rho1) = gradient_with_step(f1, p, scales.0, h_r)?;
    let (r2, rho2) = gradient_with_step(f2, p, scales.1, h_r)?;
    Ok(rho1 * r2 - r1 * rho2)
}

/// Sample points on {ρ² + τ² + η² = 1, η ≥ 0} for r on a uniform grid in (0, r_max].
pub fn sphere_samples(r_max: f64, nr: usize, ndir: usize) -> Vec<SymbolPoint> {
    let dirs = hemisphere(ndir);
    let mut out = Vec::with_capacity(nr * dirs.len());
    for i in 1..=nr {
        let r = r_max * i as f64 / nr as f64;
        for &(rho, tau, eta) in &dirs {
            out.push(SymbolPoint { r, rho, tau, eta });
        }
    }
    out
}

/// Fibonacci points on the unit sphere folded to η ≥ 0, plus the three
/// coordinate poles so degenerate directions are always present.
pub fn hemisphere(n: usize) -> Vec<(f64, f64, f64)> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut v: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rad = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            (rad * th.cos(), rad * th.sin(), z.abs())
        })
        .collect();
    v.extend([(1.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, -1.0, 0.0), (0.0, 0.0, 1.0)]);
    v
}

/// Empirical constants for the negligible-class inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NegligibleReport {
    pub gamma: f64,
    /// Smallest grid value of C_γ certifying every sample with r ≤ r_γ.
    pub c_gamma: f64,
    pub r_gamma: f64,
    /// Constant in Z ≤ C(|G| + τ²/r) over the same samples.
    pub c_z: f64,
    /// Worst slack over the certified samples, relative to ρ² + τ² + η².
    pub margin: f64,
    pub samples: usize,
}

const C_MAX: f64 = 1e6;

/// Log-spaced grid over [1, 1e6].
pub fn constant_grid() -> Vec<f64> {
    (0..=60).map(|k| 10f64.powf(k as f64 / 10.0)).collect()
}

/// Per-sample lower bounds on C for the three inequalities; None when no C works.
fn required(sym: &CollarSymbol, p: &SymbolPoint, gamma: f64) -> [Option<f64>; 3] {
    let k = sym.k_ang(p.r);
    let (y, z) = eval_yz(p, k);
    let f = sym.f_remainder(p);
    let h = sym.h_remainder(p).abs();
    let t2 = p.tau * p.tau;
    let need = |lhs: f64, free: f64, coef: f64| -> Option<f64> {
        let excess = lhs - free;
        if excess <= 0.0 {
            Some(0.0)
        } else if coef > 0.0 {
            Some(excess / coef)
        } else {
            None
        }
    };
    [need(p.tau.abs() * f.abs() / p.r, gamma * z, t2), need(h, gamma * k * p.eta * p.eta, y), need(h, gamma * z, t2)]
}

/// Determine (C_γ, r_γ) by sweeping r upward until a sample needs C > 1e6.
pub fn verify_negligible(
    sym: &CollarSymbol,
    samples: &[SymbolPoint],
    gamma: f64,
) -> Result<NegligibleReport, SymbolError> {
    let mut pts: Vec<SymbolPoint> = samples.iter().filter(|p| p.r > 0.0).cloned().collect();
    if let Some(p) = pts.iter().find(|p| p.r > sym.collar) {
        return Err(SymbolError::Chart(p.r));
    }
    pts.sort_by(|a, b| a.r.partial_cmp(&b.r).unwrap());
    let need: Vec<f64> = pts
        .par_iter()
        .map(|p| required(sym, p, gamma).iter().map(|c| c.unwrap_or(f64::INFINITY)).fold(0.0, f64::max))
        .collect();
    // r_γ: last radius before the first sample that no admissible C certifies
    let first_bad = need.iter().position(|&c| c > C_MAX);
    let cut = match first_bad {
        Some(0) => return Err(SymbolError::Verification { point: pts[0] }),
        Some(i) => {
            let rb = pts[i].r;
            pts.iter().position(|p| p.r >= rb).unwrap()
        }
        None => pts.len(),
    };
    if cut == 0 {
        return Err(SymbolError::Verification { point: pts[0] });
    }
    let r_gamma = pts[cut - 1].r;
    let worst = need[..cut].iter().cloned().fold(0.0, f64::max);
    let c_gamma = constant_grid().into_iter().find(|&c| c >= worst).unwrap_or(C_MAX);
    let mut margin = f64::INFINITY;
    let mut c_z: f64 = 0.0;
    for p in &pts[..cut] {
        let k = sym.k_ang(p.r);
        let (y, z) = eval_yz(p, k);
        let t2 = p.tau * p.tau;
        let f = sym.f_remainder(p).abs();
        let h = sym.h_remainder(p).abs();
        let n2 = p.fibre_norm2();
        let s1 = c_gamma * t2 + gamma * z - p.tau.abs() * f / p.r;
        let s2 = c_gamma * y + gamma * k * p.eta * p.eta - h;
        let s3 = c_gamma * t2 + gamma * z - h;
        margin = margin.min(s1.min(s2).min(s3) / n2);
        let denom = sym.g(p).abs() + t2 / p.r;
        if denom > 0.0 {
            c_z = c_z.max(z / denom);
        }
    }
    Ok(NegligibleReport { gamma, c_gamma, r_gamma, c_z, margin, samples: cut })
}

//! Carleman weights on the slice and sampled certificates of their symbol
//! conditions.
//!
//! Everything is expressed in the collar coordinate r of the designated
//! horizon, which runs over [0, r_far] across the whole slice, and in
//! s = r/r_far. Near the far horizon the boundary construction uses
//! u = (r_far − r)/μ with μ = 2Ĥ′(r_far), so that G(du) = −u + O(u²) there too.

use crate::model::Normalization;
use crate::symbol::{hemisphere, poisson_bracket_with_step, CollarSymbol, SymbolError, SymbolPoint};
use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::num::NonZeroUsize;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CarlemanError {
    #[error("Carleman weights need two horizons; the ball slice has one")]
    Ball,
    #[error("band [{0}, {1}] must satisfy 0 < a < b")]
    Band(f64, f64),
    #[error("α search failed up to α = {alpha}: worst sample {point:?} with value {value:e}")]
    Alpha { alpha: f64, point: SymbolPoint, value: f64 },
    #[error("mollification failed down to ε = {eps:e}")]
    Epsilon { eps: f64 },
    #[error("Bernoulli profile undefined at r = {r} (radicand {radicand:e} < 0)")]
    Bernoulli { r: f64, radicand: f64 },
    #[error("nonpositive bracket {value:e} at {point:?}")]
    Hypoellipticity { point: SymbolPoint, value: f64 },
    #[error("pseudoconvexity not certified; best M = {m}, δ = {delta}, c = {c:e} at {point:?}")]
    Pseudoconvexity { m: f64, delta: f64, c: f64, point: SymbolPoint },
    #[error(transparent)]
    Symbol(#[from] SymbolError),
}

/// Distance in s between the critical points of ψ₁ and ψ₂.
pub const SEPARATION: f64 = 0.005;
/// Width in s of the gap between B₁ and B₂.
pub const GAP: f64 = 0.001;
/// Ramp width of the relocation bump, in s.
const RAMP: f64 = 4.0 * SEPARATION;
/// Fraction of each ramp left outside B_i; the bump is flat to high order there.
const TAIL: f64 = 0.08;
/// Asymptotic slope of ψ₁ against the logit coordinate log(s/(1 − s)).
pub const LOGIT_SLOPE: f64 = 0.3;
/// Rounding width of ψ₁ at its minimum, in the logit coordinate.
const ROUNDING: f64 = 0.1;
/// R₁ is placed where φ′(R₁)R₁/a reaches this value.
pub const SPLICE_RATIO: f64 = 1.5;
/// Largest accepted φ′(R₁)R₁/a when R₁ sits at the end of its search range.
const SPLICE_CAP: f64 = 3.0;
/// Extent in s of the far boundary chart.
const FAR_CHART: f64 = 0.2;
/// Relative tolerance of the extension inequality, against a²/r.
pub const DELTA_CHECK: f64 = 1e-3;

fn gauss() -> &'static GaussLegendre {
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(24).unwrap()))
}

/// k(r) = −r⁻¹((φ′(R₁)R₁)² + (2/3)a² log(r/R₁))^{1/2}.
pub fn bernoulli_k(slope: f64, r1: f64, a: f64, r: f64) -> Result<f64, CarlemanError> {
    let radicand = (slope * r1).powi(2) + (2.0 / 3.0) * a * a * (r / r1).ln();
    if radicand < 0.0 || r <= 0.0 {
        return Err(CarlemanError::Bernoulli { r, radicand });
    }
    Ok(-radicand.sqrt() / r)
}

/// k′ from the ODE −a²/r + 3rk² + 3r²kk′ = 0.
pub fn bernoulli_dk(k: f64, a: f64, r: f64) -> f64 {
    (a * a / r - 3.0 * r * k * k) / (3.0 * r * r * k)
}

/// R₀ = R₁ exp(1/2 − (3/2)(φ′(R₁)R₁/a)²), where k′ vanishes.
pub fn bernoulli_r0(slope: f64, r1: f64, a: f64) -> f64 {
    r1 * (0.5 - 1.5 * (slope * r1 / a).powi(2)).exp()
}

/// C^∞ step, 0 below 0 and 1 above 1, with its first two derivatives.
pub fn smooth_step(x: f64) -> [f64; 3] {
    if x <= 0.0 {
        return [0.0, 0.0, 0.0];
    }
    if x >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let f = |y: f64| (-1.0 / y).exp();
    let df = |y: f64| f(y) / (y * y);
    let d2f = |y: f64| f(y) * (1.0 - 2.0 * y) / y.powi(4);
    let (a, da, d2a) = (f(x), df(x), d2f(x));
    let (b, db, d2b) = (f(1.0 - x), -df(1.0 - x), d2f(1.0 - x));
    let s = a + b;
    let n = da * b - a * db;
    let dn = d2a * b - a * d2b;
    [a / s, n / (s * s), dn / (s * s) - 2.0 * n * (da + db) / (s * s * s)]
}

const MOLLIFIER_POWER: i32 = 8;

fn mollifier_norm() -> f64 {
    // ∫(1 − x²)^k over (−1, 1) = 2 ∏ 2j/(2j + 1)
    let p: f64 = (1..=MOLLIFIER_POWER).map(|j| 2.0 * j as f64 / (2.0 * j as f64 + 1.0)).product();
    1.0 / (2.0 * p)
}

/// Polynomial bump c(1 − x²)⁸ on (−1, 1) with unit integral, and its derivative.
pub fn mollifier(x: f64) -> (f64, f64) {
    if x.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let c = mollifier_norm();
    let y = 1.0 - x * x;
    let k = MOLLIFIER_POWER;
    (c * y.powi(k), -2.0 * x * c * k as f64 * y.powi(k - 1))
}

/// Which horizon a boundary construction belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    Near,
    Far,
}

/// The designated-horizon chart stretched across the slice.
#[derive(Debug, Clone)]
pub struct SliceChart {
    pub norm: Normalization,
    pub sym: CollarSymbol,
    pub r_far: f64,
    /// 2Ĥ′(r_far): G(dr) = −μ(r_far − r) + … near the far horizon.
    pub mu_far: f64,
}

impl SliceChart {
    pub fn new(norm: &Normalization) -> Result<Self, CarlemanError> {
        let slice = &norm.slice;
        let other = slice.sides().into_iter().find(|&s| s != norm.designated).ok_or(CarlemanError::Ball)?;
        let r_far = norm.r_of(slice.horizon_radius(other).map_err(|_| CarlemanError::Ball)?);
        let mu_far = 2.0 * norm.dh_hat(r_far);
        Ok(SliceChart { norm: norm.clone(), sym: CollarSymbol::new(norm), r_far, mu_far })
    }

    pub fn u(&self, end: End, r: f64) -> f64 {
        match end {
            End::Near => r,
            End::Far => (self.r_far - r) / self.mu_far,
        }
    }
    pub fn r(&self, end: End, u: f64) -> f64 {
        match end {
            End::Near => u,
            End::Far => self.r_far - self.mu_far * u,
        }
    }
    /// dr/du.
    pub fn dr_du(&self, end: End) -> f64 {
        match end {
            End::Near => 1.0,
            End::Far => -self.mu_far,
        }
    }
    /// Lengths in u corresponding to a length in s.
    pub fn u_len(&self, end: End, s_len: f64) -> f64 {
        s_len * self.r_far / self.dr_du(end).abs()
    }
    /// m(r) = 1 − Ĥ², so G(dr) = −m.
    pub fn m(&self, r: f64) -> f64 {
        let h = self.norm.h_hat(r);
        1.0 - h * h
    }
    pub fn dm(&self, r: f64) -> f64 {
        -2.0 * self.norm.h_hat(r) * self.norm.dh_hat(r)
    }

    /// Coefficient A of τ² in (2mφ′)⁻¹{Re G_φ, Im G_φ} on the characteristic set.
    pub fn tau_coefficient(&self, r: f64) -> f64 {
        let m = self.m(r);
        -(self.dm(r) / (m * m) + self.norm.dk_ang(r) / (self.norm.k_ang(r) * m))
    }

    /// First s where the τ² coefficient turns from negative to positive.
    pub fn switch_point(&self) -> Option<f64> {
        let a = |s: f64| self.tau_coefficient(s * self.r_far);
        let n = 2000;
        let i = (1..n - 1).find(|&i| a(i as f64 / n as f64) < 0.0 && a((i + 1) as f64 / n as f64) >= 0.0)?;
        let (mut lo, mut hi) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if a(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// The unique point of {Re G_φ = 0, Im G_φ = 0} over (r, τ) with η ≥ 0,
    /// for φ′(r) = `dphi` ≠ 0: ρ = Ĥτ/m and κη² = τ²/m + mφ′².
    pub fn characteristic_point(&self, r: f64, tau: f64, dphi: f64) -> SymbolPoint {
        let h = self.norm.h_hat(r);
        let m = 1.0 - h * h;
        let rho = h * tau / m;
        let eta = ((tau * tau / m + m * dphi * dphi) / self.sym.k_ang(r)).sqrt();
        SymbolPoint::new(r, rho, tau, eta)
    }

    /// {Re G_φ, Im G_φ} for radial φ with derivatives (φ′, φ″) at p.r.
    pub fn bracket(&self, p: &SymbolPoint, dphi: f64, d2phi: f64) -> f64 {
        let m = self.m(p.r);
        let dm = self.dm(p.r);
        let gr = self.sym.g_r(p);
        d2phi * gr * gr + dphi * self.sym.g_g_r(p) + 2.0 * m * dphi * (dm * dphi * dphi + 2.0 * m * dphi * d2phi)
    }
}

/// Boundary piece of a weight in its end's coordinate u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryProfile {
    pub end: End,
    /// Band threshold in this end's normal-form units.
    pub a: f64,
    pub r1: f64,
    pub r0: f64,
    /// φ′(R₁) in u.
    pub slope: f64,
    pub k_r0: f64,
    pub gamma: f64,
    pub eps: f64,
    /// θ_ε ≡ k(R₀) on [0, flat].
    pub flat: f64,
    /// R₁ + 3γ: the extension is glued to the interior weight here.
    pub join: f64,
    pub phi_join: f64,
    /// Outer end R₁ + ℓ of the region where the extension inequality is checked.
    pub reach: f64,
}

impl BoundaryProfile {
    fn cutoff(&self, u: f64) -> (f64, f64) {
        let s = smooth_step((u - self.r1 - self.gamma) / self.gamma);
        (1.0 - s[0], -s[1] / self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleDensity {
    pub nr: usize,
    pub ndir: usize,
    pub ntau: usize,
}

impl Default for SampleDensity {
    fn default() -> Self {
        SampleDensity { nr: 200, ndir: 64, ntau: 64 }
    }
}

/// Search limits: largest α tried and the first mollification width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchLimits {
    pub alpha_cap: f64,
    /// Initial ε as a fraction of γ; halved until the extension holds.
    pub eps0: f64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits { alpha_cap: 1024.0, eps0: 0.5 }
    }
}

/// Placement of the critical points, excluded sets and relocation bump, in s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Layout {
    /// Zero of the τ² coefficient of the bracket on the characteristic set.
    pub switch: f64,
    pub critical: [f64; 2],
    pub exclusions: [(f64, f64); 2],
    /// The bump rises over [bump.0, bump.0 + RAMP] and falls over [bump.1 − RAMP, bump.1].
    pub bump: (f64, f64),
}

fn logit(s: f64) -> [f64; 3] {
    let q = s * (1.0 - s);
    [(s / (1.0 - s)).ln(), 1.0 / q, (2.0 * s - 1.0) / (q * q)]
}

impl Layout {
    /// Critical points straddle `switch`, each B_i reaching to within GAP/2 of it.
    pub fn new(switch: f64) -> Self {
        let p1 = switch - SEPARATION / 2.0;
        let p2 = switch + SEPARATION / 2.0;
        let bump = (p1 - RAMP, p2 + RAMP);
        let exclusions = [(bump.0 + TAIL * RAMP, switch - GAP / 2.0), (switch + GAP / 2.0, bump.1 - TAIL * RAMP)];
        Layout { switch, critical: [p1, p2], exclusions, bump }
    }

    /// ψ₁ = LOGIT_SLOPE·((x² + w²)^{1/2} − w), x = logit(s) − logit(p₁).
    fn psi1(&self, s: f64) -> [f64; 3] {
        let s = s.clamp(1e-300, 1.0 - 1e-16);
        let t = logit(s);
        let x = t[0] - logit(self.critical[0])[0];
        let w = ROUNDING;
        let root = (x * x + w * w).sqrt();
        let e = LOGIT_SLOPE;
        let dq = e * x / root;
        let d2q = e * w * w / root.powi(3);
        [e * (root - w), dq * t[1], d2q * t[1] * t[1] + dq * t[2]]
    }

    /// g(s) = s + (p₁ − p₂)β(s), sending p₂ to p₁.
    fn relocation(&self, s: f64) -> [f64; 3] {
        let up = smooth_step((s - self.bump.0) / RAMP);
        let down = smooth_step((self.bump.1 - s) / RAMP);
        let b = up[0] * down[0];
        let db = (up[1] * down[0] - up[0] * down[1]) / RAMP;
        let d2b = (up[2] * down[0] - 2.0 * up[1] * down[1] + up[0] * down[2]) / (RAMP * RAMP);
        let shift = self.critical[0] - self.critical[1];
        [s + shift * b, 1.0 + shift * db, shift * d2b]
    }

    /// ψ_i(s) and its first two s-derivatives.
    pub fn psi(&self, index: usize, s: f64) -> [f64; 3] {
        if index == 1 {
            return self.psi1(s);
        }
        let g = self.relocation(s);
        let p = self.psi1(g[0]);
        [p[0], p[1] * g[1], p[2] * g[1] * g[1] + p[1] * g[2]]
    }
}

impl End {
    fn idx(self) -> usize {
        match self {
            End::Near => 0,
            End::Far => 1,
        }
    }
}

/// One of the two weights φ_i = exp(αψ_i), extended to the horizons.
#[derive(Debug, Clone)]
pub struct CarlemanWeight {
    pub index: usize,
    pub alpha: f64,
    pub band: (f64, f64),
    pub layout: Layout,
    pub chart: SliceChart,
    /// R₁ per end, in that end's u.
    pub r1: [f64; 2],
    /// Chart extent ℓ per end: the extension inequality is imposed on (0, R₁ + ℓ].
    pub reach: [f64; 2],
    pub ends: Vec<BoundaryProfile>,
}

impl CarlemanWeight {
    /// Critical point of ψ_i in r.
    pub fn critical(&self) -> f64 {
        self.layout.critical[self.index - 1] * self.chart.r_far
    }

    /// B₁, B₂ as r-intervals.
    pub fn exclusions(&self) -> [(f64, f64); 2] {
        let rf = self.chart.r_far;
        self.layout.exclusions.map(|(lo, hi)| (lo * rf, hi * rf))
    }

    pub fn excluded(&self, r: f64) -> bool {
        self.exclusions().iter().any(|&(lo, hi)| r >= lo && r <= hi)
    }

    /// exp(αψ_i) with its first two r-derivatives.
    pub fn interior(&self, r: f64) -> [f64; 3] {
        let rf = self.chart.r_far;
        let p = self.layout.psi(self.index, r / rf);
        let e = (self.alpha * p[0]).exp();
        let a = self.alpha;
        [e, a * p[1] * e / rf, (a * a * p[1] * p[1] + a * p[2]) * e / (rf * rf)]
    }

    /// Interior φ_u and φ_uu in the coordinate of `end`.
    fn interior_u(&self, end: End, u: f64) -> (f64, f64) {
        let j = self.chart.dr_du(end);
        let d = self.interior(self.chart.r(end, u));
        (d[1] * j, d[2] * j * j)
    }

    /// Unmollified θ and θ′ of a boundary profile.
    fn theta_raw(&self, bp: &BoundaryProfile, u: f64) -> (f64, f64) {
        if u >= bp.r1 {
            self.interior_u(bp.end, u)
        } else if u >= bp.r0 {
            let k = bernoulli_k(bp.slope, bp.r1, bp.a, u).unwrap_or(bp.k_r0);
            (k, bernoulli_dk(k, bp.a, u))
        } else {
            (bp.k_r0, 0.0)
        }
    }

    /// θ_ε = (1 − H)θ + η_ε∗(Hθ) and its derivative.
    pub fn theta_eps(&self, bp: &BoundaryProfile, u: f64) -> (f64, f64) {
        if u <= bp.flat {
            return (bp.k_r0, 0.0);
        }
        let (h, dh) = bp.cutoff(u);
        let (th, dth) = self.theta_raw(bp, u);
        let eps = bp.eps;
        let lo = u - eps;
        let hi = (u + eps).min(bp.r1 + 2.0 * bp.gamma);
        let mut cuts = vec![lo];
        for c in [bp.r0, bp.r1, bp.r1 + bp.gamma] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
        cuts.push(hi);
        let (mut conv, mut dconv) = (0.0, 0.0);
        for w in cuts.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            let f = |s: f64| {
                let (m, dm) = mollifier((u - s) / eps);
                let hs = bp.cutoff(s).0 * self.theta_raw(bp, s).0;
                (m * hs, dm * hs)
            };
            conv += gauss().integrate(w[0], w[1], |s| f(s).0) / eps;
            dconv += gauss().integrate(w[0], w[1], |s| f(s).1) / (eps * eps);
        }
        ((1.0 - h) * th + conv, -dh * th + (1.0 - h) * dth + dconv)
    }

    fn end_at(&self, r: f64) -> Option<(&BoundaryProfile, f64)> {
        self.ends.iter().find_map(|bp| {
            let u = self.chart.u(bp.end, r);
            (u < bp.join).then_some((bp, u))
        })
    }

    /// φ′(r).
    pub fn dphi(&self, r: f64) -> f64 {
        match self.end_at(r) {
            Some((bp, u)) => self.theta_eps(bp, u).0 / self.chart.dr_du(bp.end),
            None => self.interior(r)[1],
        }
    }

    /// φ″(r).
    pub fn d2phi(&self, r: f64) -> f64 {
        match self.end_at(r) {
            Some((bp, u)) => self.theta_eps(bp, u).1 / self.chart.dr_du(bp.end).powi(2),
            None => self.interior(r)[2],
        }
    }

    /// φ(r), integrating θ_ε inward from the junction on the boundary pieces.
    pub fn phi(&self, r: f64) -> f64 {
        match self.end_at(r) {
            Some((bp, u)) => {
                let panels = 8;
                let w = (u - bp.join) / panels as f64;
                let mut acc = bp.phi_join;
                for k in 0..panels {
                    let a = bp.join + k as f64 * w;
                    acc += gauss().integrate(a, a + w, |s| self.theta_eps(bp, s).0);
                }
                acc
            }
            None => self.interior(r)[0],
        }
    }

    /// Initial difference step in r, below the scale on which φ′ varies near r.
    pub fn variation_scale(&self, r: f64) -> f64 {
        let rf = self.chart.r_far;
        match self.end_at(r) {
            Some((bp, u)) => {
                // θ has kinks at R₀ and R₁ that the mollifier rounds off at scale ε
                let local = u.abs().min(bp.gamma).min((u - bp.r0).abs()).min((u - bp.r1).abs()).max(bp.eps);
                1e-1 * local * self.chart.dr_du(bp.end).abs()
            }
            None => 1e-2 * r.min(rf - r).min(0.1 * rf),
        }
    }

    /// Band threshold a in the normal-form units of `end`.
    fn end_a(&self, end: End) -> f64 {
        self.band.0 / self.chart.dr_du(end).abs()
    }

    /// −φ_u(u)u/a for the interior weight.
    fn splice_ratio(&self, end: End, u: f64) -> f64 {
        -self.interior_u(end, u).0 * u / self.end_a(end)
    }

    /// Largest admissible R₁ at `end`, in u.
    fn splice_limit(&self, end: End) -> f64 {
        let s = match end {
            End::Near => self.layout.bump.0,
            End::Far => FAR_CHART,
        };
        0.25 * self.chart.u_len(end, s)
    }

    /// R₁ with φ′(R₁)R₁/a = SPLICE_RATIO, by bisection in log u.
    fn splice_radius(&self, end: End) -> Option<f64> {
        let hi = self.splice_limit(end);
        let lo = 1e-6 * hi;
        if self.splice_ratio(end, hi) >= SPLICE_RATIO {
            return (self.splice_ratio(end, hi) <= SPLICE_CAP).then_some(hi);
        }
        if !(self.splice_ratio(end, lo) > SPLICE_RATIO) {
            return None;
        }
        let (mut a, mut b) = (lo.ln(), hi.ln());
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if self.splice_ratio(end, m.exp()) > SPLICE_RATIO {
                a = m;
            } else {
                b = m;
            }
        }
        Some(a.exp())
    }

    /// Place R₁ and ℓ at both ends; false if no admissible R₁ exists.
    fn place_splices(&mut self) -> bool {
        for end in [End::Near, End::Far] {
            let Some(r1) = self.splice_radius(end) else {
                return false;
            };
            self.r1[end.idx()] = r1;
            self.reach[end.idx()] = match end {
                End::Near => self.chart.u_len(end, 0.8 * self.layout.bump.0) - r1,
                End::Far => self.chart.u_len(end, FAR_CHART),
            };
        }
        true
    }

    /// 3(φ′(R₁)R₁)² > a² and φ″ ≥ −φ′/u on [R₁, R₁ + ℓ] at `end`.
    fn alpha_conditions(&self, end: End) -> bool {
        let r1 = self.r1[end.idx()];
        let ell = self.reach[end.idx()];
        let a = self.end_a(end);
        let (slope, _) = self.interior_u(end, r1);
        if 3.0 * (slope * r1).powi(2) <= a * a || slope >= 0.0 {
            return false;
        }
        (0..=200).all(|j| {
            let u = r1 + ell * j as f64 / 200.0;
            let (d1, d2) = self.interior_u(end, u);
            d1 < 0.0 && d2 >= -d1 / u
        })
    }

    /// The interior weight with α replaced, keeping the splice radii.
    pub fn with_alpha(&self, alpha: f64) -> CarlemanWeight {
        CarlemanWeight { alpha, ends: Vec::new(), ..self.clone() }
    }

    /// s-range of the interior piece, between the two R₁.
    pub fn interior_range(&self) -> (f64, f64) {
        let rf = self.chart.r_far;
        (self.chart.r(End::Near, self.r1[0]) / rf, self.chart.r(End::Far, self.r1[1]) / rf)
    }
}

fn tau_nodes(band: (f64, f64), n: usize) -> Vec<f64> {
    let half = (n / 2).max(1);
    let mut v = Vec::with_capacity(2 * half);
    for k in 0..half {
        let t = if half == 1 { 0.0 } else { k as f64 / (half - 1) as f64 };
        let tau = band.0 + (band.1 - band.0) * t;
        v.push(tau);
        v.push(-tau);
    }
    v
}

/// Sampled bracket on the characteristic set: (worst value, worst point, count).
fn sampled_bracket(
    w: &CarlemanWeight,
    s_range: (f64, f64),
    density: &SampleDensity,
    bracket: &(dyn Fn(&SymbolPoint, f64) -> Result<f64, SymbolError> + Sync),
) -> Result<(f64, SymbolPoint, usize), CarlemanError> {
    let rf = w.chart.r_far;
    let taus = tau_nodes(w.band, density.ntau);
    let rs: Vec<f64> = (0..density.nr)
        .map(|i| rf * (s_range.0 + (s_range.1 - s_range.0) * (i as f64 + 0.5) / density.nr as f64))
        .filter(|&r| !w.excluded(r))
        .collect();
    let results: Vec<Result<(f64, SymbolPoint), SymbolError>> = rs
        .par_iter()
        .flat_map_iter(|&r| {
            let d1 = w.dphi(r);
            taus.iter()
                .map(move |&tau| {
                    let p = w.chart.characteristic_point(r, tau, d1);
                    Ok((bracket(&p, d1)?, p))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut worst = (f64::INFINITY, SymbolPoint::new(0.0, 0.0, 0.0, 0.0));
    let mut count = 0;
    for res in results {
        let (v, p) = res?;
        count += 1;
        if v < worst.0 {
            worst = (v, p);
        }
    }
    Ok((worst.0, worst.1, count))
}

/// Construct ψ₁, ψ₂ around the sign change of the τ² coefficient and find α
/// by doubling so that R₁ can be placed at both ends, the extension
/// conditions on α hold, and the bracket is positive on the sampled
/// characteristic set of the interior piece off B₁ ∪ B₂.
pub fn build_interior(
    norm: &Normalization,
    band: (f64, f64),
    density: &SampleDensity,
) -> Result<(CarlemanWeight, CarlemanWeight), CarlemanError> {
    build_interior_with(norm, band, density, &SearchLimits::default())
}

/// [`build_interior`] with explicit search limits.
pub fn build_interior_with(
    norm: &Normalization,
    band: (f64, f64),
    density: &SampleDensity,
    limits: &SearchLimits,
) -> Result<(CarlemanWeight, CarlemanWeight), CarlemanError> {
    if !(band.0 > 0.0 && band.1 > band.0) {
        return Err(CarlemanError::Band(band.0, band.1));
    }
    let chart = SliceChart::new(norm)?;
    let layout = Layout::new(chart.switch_point().unwrap_or(0.5));
    let mut alpha = 1.0;
    let cap = limits.alpha_cap;
    loop {
        let make = |index| CarlemanWeight {
            index,
            alpha,
            band,
            layout,
            chart: chart.clone(),
            r1: [0.0; 2],
            reach: [0.0; 2],
            ends: Vec::new(),
        };
        let (mut w1, mut w2) = (make(1), make(2));
        let mut worst = (f64::NEG_INFINITY, SymbolPoint::new(0.0, 0.0, 0.0, 0.0));
        if w1.place_splices() {
            w2.r1 = w1.r1;
            w2.reach = w1.reach;
            let ok = [&w1, &w2].iter().all(|w| w.alpha_conditions(End::Near) && w.alpha_conditions(End::Far));
            worst.0 = f64::INFINITY;
            for w in [&w1, &w2] {
                let closed = |p: &SymbolPoint, d1: f64| Ok(w.chart.bracket(p, d1, w.d2phi(p.r)));
                let (v, p, _) = sampled_bracket(w, w.interior_range(), density, &closed)?;
                if v < worst.0 {
                    worst = (v, p);
                }
            }
            if ok && worst.0 > 0.0 {
                return Ok((w1, w2));
            }
        }
        if alpha >= cap {
            return Err(CarlemanError::Alpha { alpha, point: worst.1, value: worst.0 });
        }
        alpha *= 2.0;
    }
}

/// Worst closed-form bracket over the sampled characteristic set of the
/// interior piece, off B₁ ∪ B₂.
pub fn interior_margin(w: &CarlemanWeight, density: &SampleDensity) -> Result<f64, CarlemanError> {
    let closed = |p: &SymbolPoint, d1: f64| Ok(w.chart.bracket(p, d1, w.interior(p.r)[2]));
    Ok(sampled_bracket(w, w.interior_range(), density, &closed)?.0)
}

/// Residual −a²/u + 3uθ² + 3u²θθ′ of the extension inequality.
pub fn extension_lhs(a: f64, u: f64, theta: f64, dtheta: f64) -> f64 {
    -a * a / u + 3.0 * u * theta * theta + 3.0 * u * u * theta * dtheta
}

/// Replace φ near each horizon by the integral of the mollified slope table,
/// halving ε until θ_ε < 0, θ_ε′ ≥ 0 and the extension inequality hold on
/// (0, R₁ + ℓ] to within δ_check = 1e−3·a²/u.
pub fn extend_boundary(w: &CarlemanWeight) -> Result<CarlemanWeight, CarlemanError> {
    extend_boundary_with(w, SearchLimits::default().eps0)
}

/// [`extend_boundary`] starting from ε = `eps0`·γ.
pub fn extend_boundary_with(w: &CarlemanWeight, eps0: f64) -> Result<CarlemanWeight, CarlemanError> {
    let mut out = w.clone();
    out.ends.clear();
    for end in [End::Near, End::Far] {
        let a = w.end_a(end);
        let r1 = w.r1[end.idx()];
        let ell = w.reach[end.idx()];
        let (slope, _) = w.interior_u(end, r1);
        let r0 = bernoulli_r0(slope, r1, a);
        let k_r0 = bernoulli_k(slope, r1, a, r0)?;
        let gamma = ell / 8.0;
        let join = r1 + 3.0 * gamma;
        let phi_join = w.interior(w.chart.r(end, join))[0];
        let mut eps = gamma * eps0;
        let mut found = None;
        for _ in 0..16 {
            let bp = BoundaryProfile {
                end,
                a,
                r1,
                r0,
                slope,
                k_r0,
                gamma,
                eps,
                flat: (r0 - eps).max(0.0),
                join,
                phi_join,
                reach: r1 + ell,
            };
            if extension_ok(w, &bp) {
                found = Some(bp);
                break;
            }
            eps /= 2.0;
        }
        out.ends.push(found.ok_or(CarlemanError::Epsilon { eps })?);
    }
    Ok(out)
}

/// Worst normalized slack of the extension conditions over a grid on (0, reach].
pub fn extension_slack(w: &CarlemanWeight, bp: &BoundaryProfile, n: usize) -> f64 {
    // uniform grid plus a fine grid across each mollified kink
    let mut us: Vec<f64> = (0..n).map(|j| bp.reach * (j as f64 + 0.5) / n as f64).collect();
    for c in [bp.r0, bp.r1, bp.r1 + bp.gamma, bp.r1 + 2.0 * bp.gamma] {
        us.extend((0..=100).map(|j| c + bp.eps * (j as f64 / 25.0 - 2.0)).filter(|&u| u > 0.0));
    }
    us.into_par_iter()
        .map(|u| {
            let (t, dt) = w.theta_eps(bp, u);
            let scale = bp.a * bp.a / u;
            let ineq = DELTA_CHECK * scale - extension_lhs(bp.a, u, t, dt);
            let sign = -t / t.abs().max(1e-300);
            let mono = dt / (t.abs() / u) + 1e-9;
            (ineq / scale).min(sign).min(mono)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

fn extension_ok(w: &CarlemanWeight, bp: &BoundaryProfile) -> bool {
    extension_slack(w, bp, 600) >= 0.0
}

/// Interior construction followed by boundary extension.
pub fn build_weights(
    norm: &Normalization,
    band: (f64, f64),
    density: &SampleDensity,
) -> Result<(CarlemanWeight, CarlemanWeight), CarlemanError> {
    build_weights_with(norm, band, density, &SearchLimits::default())
}

/// [`build_weights`] with explicit search limits.
pub fn build_weights_with(
    norm: &Normalization,
    band: (f64, f64),
    density: &SampleDensity,
    limits: &SearchLimits,
) -> Result<(CarlemanWeight, CarlemanWeight), CarlemanError> {
    let (w1, w2) = build_interior_with(norm, band, density, limits)?;
    Ok((extend_boundary_with(&w1, limits.eps0)?, extend_boundary_with(&w2, limits.eps0)?))
}

/// min over B₁ of φ₂ − φ₁ and over B₂ of φ₁ − φ₂.
pub fn ordering_gap(w1: &CarlemanWeight, w2: &CarlemanWeight) -> f64 {
    let ex = w1.exclusions();
    let mut gap = f64::INFINITY;
    for (i, &(lo, hi)) in ex.iter().enumerate() {
        for k in 0..=50 {
            let r = lo + (hi - lo) * k as f64 / 50.0;
            let d = w2.phi(r) - w1.phi(r);
            gap = gap.min(if i == 0 { d } else { -d });
        }
    }
    gap
}

#[derive(Debug, Clone, Serialize)]
pub struct HypoReport {
    pub index: usize,
    pub alpha: f64,
    pub margin: f64,
    pub worst_point: SymbolPoint,
    pub samples: usize,
    /// max |FD − closed form| / |closed form| over the samples.
    pub closed_form_gap: f64,
    /// Samples where the difference quotients did not settle; the closed form is used there.
    pub fd_failures: usize,
    /// min |Im G_φ| on r = 0 over the τ nodes, positive when τ ≠ 0.
    pub boundary_imaginary: f64,
}

/// Minimum of {Re G_φ, Im G_φ} (finite-difference brackets) over the
/// characteristic set sampled on a uniform r grid across the slice, off
/// B₁ ∪ B₂, with ±τ ∈ [a, b].
pub fn certify_hypoellipticity(w: &CarlemanWeight, density: &SampleDensity) -> Result<HypoReport, CarlemanError> {
    certify_hypoellipticity_on(w, (0.0, 1.0), density)
}

/// [`certify_hypoellipticity`] restricted to s ∈ `range`.
pub fn certify_hypoellipticity_on(
    w: &CarlemanWeight,
    range: (f64, f64),
    density: &SampleDensity,
) -> Result<HypoReport, CarlemanError> {
    let chart = &w.chart;
    let stats = std::sync::Mutex::new((0.0f64, 0usize));
    let fd = |p: &SymbolPoint, d1: f64| -> Result<f64, SymbolError> {
        let re = |q: &SymbolPoint| chart.sym.g(q) + chart.m(q.r) * w.dphi(q.r).powi(2);
        let im = |q: &SymbolPoint| w.dphi(q.r) * chart.sym.g_r(q);
        let fib = p.fibre_norm2().sqrt();
        let s1 = p.fibre_norm2() + chart.m(p.r).abs() * d1 * d1;
        let s2 = d1.abs() * fib;
        let c = chart.bracket(p, d1, w.d2phi(p.r));
        let v = poisson_bracket_with_step(&re, &im, p, (s1, s2), w.variation_scale(p.r));
        let mut st = stats.lock().unwrap();
        match v {
            Ok(v) => {
                st.0 = st.0.max((v - c).abs() / c.abs().max(1e-300));
                Ok(v)
            }
            Err(_) => {
                st.1 += 1;
                Ok(c)
            }
        }
    };
    let (margin, worst_point, samples) = sampled_bracket(w, range, density, &fd)?;
    if margin <= 0.0 {
        return Err(CarlemanError::Hypoellipticity { point: worst_point, value: margin });
    }
    let (closed_form_gap, fd_failures) = *stats.lock().unwrap();
    let d0 = w.dphi(0.0);
    let boundary_imaginary = tau_nodes(w.band, density.ntau)
        .iter()
        .map(|&tau| (d0 * chart.sym.g_r(&SymbolPoint::new(0.0, 0.0, tau, 0.0))).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(HypoReport {
        index: w.index,
        alpha: w.alpha,
        margin,
        worst_point,
        samples,
        closed_form_gap,
        fd_failures,
        boundary_imaginary,
    })
}

/// Rows (r, φ₁, φ₂, φ₁′) on a uniform grid over the slice.
pub fn profile_table(w1: &CarlemanWeight, w2: &CarlemanWeight, n: usize) -> Vec<[f64; 4]> {
    (0..=n)
        .into_par_iter()
        .map(|i| {
            let r = w1.chart.r_far * i as f64 / n as f64;
            [r, w1.phi(r), w2.phi(r), w1.dphi(r)]
        })
        .collect()
}

/// λ(r) = 1/2 − (1 − δ)rM.
pub fn lambda_profile(m: f64, delta: f64, r: f64) -> f64 {
    0.5 - (1.0 - delta) * r * m
}

/// ℰ = (1/4)(M{G,r}² − {G,{G,r}} − 4λG).
pub fn pseudoconvex_e(sym: &CollarSymbol, p: &SymbolPoint, m: f64, delta: f64) -> f64 {
    let l = lambda_profile(m, delta, p.r);
    let gr = sym.g_r(p);
    0.25 * (m * gr * gr - sym.g_g_r(p) - 4.0 * l * sym.g(p))
}

/// ℰ₀: ℰ with G replaced by G₀.
pub fn pseudoconvex_e0(p: &SymbolPoint, k0: f64, m: f64, delta: f64) -> f64 {
    let l = lambda_profile(m, delta, p.r);
    let (r, rho, tau) = (p.r, p.rho, p.tau);
    let g0 = -r * rho * rho - 2.0 * rho * tau - k0 * p.eta * p.eta;
    m * (r * rho + tau).powi(2) - 0.5 * (r * rho * rho + 2.0 * rho * tau) - l * g0
}

#[derive(Debug, Clone, Serialize)]
pub struct PseudoconvexCertificate {
    #[serde(rename = "M")]
    pub m: f64,
    pub delta: f64,
    pub c: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub worst_point: SymbolPoint,
    pub margin: f64,
    pub samples: usize,
}

/// Doubling search over M and a descending grid over δ for
/// ℰ ≥ c((rρ)² + τ² + κ_ang η²), sampled on the unit sphere of that form for
/// r ∈ (0, min(1/(4M), collar)].
pub fn certify_pseudoconvexity(
    norm: &Normalization,
    density: &SampleDensity,
) -> Result<PseudoconvexCertificate, CarlemanError> {
    let mut best: Option<PseudoconvexCertificate> = None;
    let mut m = 1.0;
    while m <= 1024.0 {
        for delta in [0.5, 0.25, 0.1, 0.05, 0.01] {
            let cert = pseudoconvex_at(norm, m, delta, density);
            if cert.c > 0.0 {
                return Ok(cert);
            }
            if best.as_ref().is_none_or(|b| cert.c > b.c) {
                best = Some(cert);
            }
        }
        m *= 2.0;
    }
    let b = best.unwrap();
    Err(CarlemanError::Pseudoconvexity { m: b.m, delta: b.delta, c: b.c, point: b.worst_point })
}

/// Sampled certificate for fixed (M, δ); c ≤ 0 means it fails.
pub fn pseudoconvex_at(norm: &Normalization, m: f64, delta: f64, density: &SampleDensity) -> PseudoconvexCertificate {
    let sym = CollarSymbol::new(norm);
    let r_max = (0.25 / m).min(sym.collar);
    let dirs = hemisphere(density.ndir);
    let rows: Vec<(f64, SymbolPoint)> = (1..=density.nr)
        .into_par_iter()
        .flat_map_iter(|i| {
            let r = r_max * i as f64 / density.nr as f64;
            let k = sym.k_ang(r);
            let sym = &sym;
            dirs.iter().map(move |&(x, t, y)| {
                let p = SymbolPoint::new(r, x / r, t, y / k.sqrt());
                (pseudoconvex_e(sym, &p, m, delta), p)
            })
        })
        .collect();
    let (c, worst_point) =
        rows.iter().fold((f64::INFINITY, rows[0].1), |acc, &(e, p)| if e < acc.0 { (e, p) } else { acc });
    PseudoconvexCertificate {
        m,
        delta,
        c,
        r0: r_max,
        lambda_min: lambda_profile(m, delta, r_max),
        lambda_max: lambda_profile(m, delta, 0.0),
        worst_point,
        margin: c,
        samples: rows.len(),
    }
}

/// Rectangle in (t, r).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub t0: f64,
    pub t1: f64,
    pub r0: f64,
    pub r1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiplierCheck {
    pub residual: f64,
    pub scale: f64,
    pub step_r: f64,
}

/// Fourth-order central difference.
fn d4(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

fn d4c(f: &dyn Fn(f64) -> Complex64, x: f64, h: f64) -> Complex64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Radial spacetime data of the normalized metric in (t, r).
struct Spacetime<'a> {
    norm: &'a Normalization,
}

impl Spacetime<'_> {
    fn ginv(&self, r: f64) -> [[f64; 2]; 2] {
        let h = self.norm.h_hat(r);
        [[1.0, h], [h, h * h - 1.0]]
    }
    fn g(&self, r: f64) -> [[f64; 2]; 2] {
        let h = self.norm.h_hat(r);
        [[1.0 - h * h, h], [h, -1.0]]
    }
    fn dg(&self, r: f64) -> [[f64; 2]; 2] {
        let h = self.norm.h_hat(r);
        let dh = self.norm.dh_hat(r);
        [[-2.0 * h * dh, dh], [dh, 0.0]]
    }
    /// √|g| up to the angular factor.
    fn sigma(&self, r: f64) -> f64 {
        1.0 / self.norm.k_ang(r)
    }
    /// ∇_a∇_b r = −Γ^r_ab.
    fn hess_r(&self, r: f64) -> [[f64; 2]; 2] {
        let gi = self.ginv(r);
        let dg = self.dg(r);
        // ∂_c g_ab is nonzero only for c = r
        let d = |c: usize, a: usize, b: usize| if c == 1 { dg[a][b] } else { 0.0 };
        let mut out = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let mut gamma = 0.0;
                for c in 0..2 {
                    gamma += 0.5 * gi[1][c] * (d(a, c, b) + d(b, c, a) - d(c, a, b));
                }
                out[a][b] = -gamma;
            }
        }
        out
    }
}

/// Both sides of Re(□v·(Sv̄ + wv̄)) = div J + Π(dv, dv̄) + (1/2)(□w)|v|² for
/// radial v(t, r), S = ∇r, w = λ + (1/2)□r, with every derivative taken by
/// fourth-order central differences of step (rect size)/n. Returns the max
/// residual over a fixed 7×7 lattice of interior points.
pub fn verify_multiplier_identity(
    norm: &Normalization,
    v: &(dyn Fn(f64, f64) -> Complex64 + Sync),
    lambda: &(dyn Fn(f64) -> f64 + Sync),
    rect: Rect,
    n: usize,
) -> MultiplierCheck {
    let st = Spacetime { norm };
    let ht = (rect.t1 - rect.t0) / n as f64;
    let hr = (rect.r1 - rect.r0) / n as f64;
    let dv = |t: f64, r: f64| -> [Complex64; 2] { [d4c(&|x| v(x, r), t, ht), d4c(&|x| v(t, x), r, hr)] };
    let box_r = |r: f64| d4(&|x| st.sigma(x) * st.ginv(x)[1][1], r, hr) / st.sigma(r);
    let w = |r: f64| lambda(r) + 0.5 * box_r(r);
    let dw = |r: f64| d4(&w, r, hr);
    let box_w = |r: f64| d4(&|x| st.sigma(x) * st.ginv(x)[1][1] * dw(x), r, hr) / st.sigma(r);
    let box_v = |t: f64, r: f64| -> Complex64 {
        let flux = |a: usize, tt: f64, rr: f64| {
            let gi = st.ginv(rr);
            let d = dv(tt, rr);
            (d[0] * gi[a][0] + d[1] * gi[a][1]) * st.sigma(rr)
        };
        (d4c(&|x| flux(0, x, r), t, ht) + d4c(&|x| flux(1, t, x), r, hr)) / st.sigma(r)
    };
    let j = |t: f64, r: f64| -> [f64; 2] {
        let gi = st.ginv(r);
        let g = st.g(r);
        let d = dv(t, r);
        let re = |a: usize, b: usize| (d[a] * d[b].conj()).re;
        let gdv: f64 = (0..2).flat_map(|a| (0..2).map(move |b| (a, b))).map(|(a, b)| gi[a][b] * re(a, b)).sum();
        let s = [gi[0][1], gi[1][1]];
        let q = |a: usize, b: usize| re(a, b) - 0.5 * gdv * g[a][b];
        let vv = v(t, r);
        let abs2 = vv.norm_sqr();
        // ∂_b|v|² = 2 Re(v̄ ∂_b v)
        let dabs = [2.0 * (vv.conj() * d[0]).re, 2.0 * (vv.conj() * d[1]).re];
        let (wr, dwr) = (w(r), dw(r));
        let mut out = [0.0; 2];
        for (a, o) in out.iter_mut().enumerate() {
            let mut qs = 0.0;
            for c in 0..2 {
                for b in 0..2 {
                    qs += gi[a][c] * q(c, b) * s[b];
                }
            }
            let grad_abs = gi[a][0] * dabs[0] + gi[a][1] * dabs[1];
            let grad_w = gi[a][1] * dwr;
            *o = qs + 0.5 * wr * grad_abs - 0.5 * grad_w * abs2;
        }
        out
    };
    let points: Vec<(f64, f64)> = (1..=7)
        .flat_map(|i| {
            (1..=7).map(move |k| {
                (rect.t0 + (rect.t1 - rect.t0) * i as f64 / 8.0, rect.r0 + (rect.r1 - rect.r0) * k as f64 / 8.0)
            })
        })
        .collect();
    let sides: Vec<(f64, f64)> = points
        .par_iter()
        .map(|&(t, r)| {
            let gi = st.ginv(r);
            let d = dv(t, r);
            let vv = v(t, r);
            let s = [gi[0][1], gi[1][1]];
            let sv = s[0] * d[0].conj() + s[1] * d[1].conj();
            let lhs = (box_v(t, r) * (sv + w(r) * vv.conj())).re;
            let div =
                (d4(&|x| st.sigma(r) * j(x, r)[0], t, ht) + d4(&|x| st.sigma(x) * j(t, x)[1], r, hr)) / st.sigma(r);
            let hess = st.hess_r(r);
            let lam = lambda(r);
            let mut pi = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    let mut up = 0.0;
                    for c in 0..2 {
                        for e in 0..2 {
                            up += gi[a][c] * gi[b][e] * hess[c][e];
                        }
                    }
                    pi += (-up - lam * gi[a][b]) * (d[a] * d[b].conj()).re;
                }
            }
            let rhs = div + pi + 0.5 * box_w(r) * vv.norm_sqr();
            (lhs, rhs)
        })
        .collect();
    let residual = sides.iter().map(|(l, r)| (l - r).abs()).fold(0.0, f64::max);
    let scale = sides.iter().map(|(l, _)| l.abs()).fold(0.0, f64::max);
    MultiplierCheck { residual, scale, step_r: hr }
}

/// V = (1/2)□w + V₀w − (1/2)S(V₁) − (1/2)V₁□r + Φ′w² for Φ′ = −c/h constant,
/// with V₀ = (Φ′)²G(dr) − Φ′□r and V₁ = V₀ − 2Φ′w.
pub fn modified_potential(norm: &Normalization, lambda: &dyn Fn(f64) -> f64, c: f64, h: f64, r: f64) -> f64 {
    let st = Spacetime { norm };
    let step = 1e-3;
    let rid = |f: &dyn Fn(f64) -> f64, x: f64| crate::symbol::ridders(f, x, step).0;
    let grr = |x: f64| st.ginv(x)[1][1];
    let box_r = |x: f64| rid(&|y| st.sigma(y) * grr(y), x) / st.sigma(x);
    let w = |x: f64| lambda(x) + 0.5 * box_r(x);
    let box_w = |x: f64| rid(&|y| st.sigma(y) * grr(y) * rid(&w, y), x) / st.sigma(x);
    let dphi = -c / h;
    let v0 = |x: f64| dphi * dphi * grr(x) - dphi * box_r(x);
    let v1 = |x: f64| v0(x) - 2.0 * dphi * w(x);
    let s_v1 = grr(r) * rid(&v1, r);
    let wr = w(r);
    0.5 * box_w(r) + v0(r) * wr - 0.5 * s_v1 - 0.5 * v1(r) * box_r(r) + dphi * wr * wr
}

/// (f₀, f₁, f₂) with V = f₀ + h⁻¹f₁ + h⁻²f₂, from V at h = 1, 1/2, 1/4.
pub fn potential_coefficients(norm: &Normalization, lambda: &dyn Fn(f64) -> f64, c: f64, r: f64) -> [f64; 3] {
    let xs = [1.0, 2.0, 4.0];
    let ys = xs.map(|x| modified_potential(norm, lambda, c, 1.0 / x, r));
    let a = nalgebra::Matrix3::from_fn(|i, j| xs[i].powi(j as i32));
    let sol = a.lu().solve(&nalgebra::Vector3::from(ys)).unwrap();
    [sol[0], sol[1], sol[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_is_monotone_and_flat_at_ends() {
        assert_eq!(smooth_step(0.0), [0.0, 0.0, 0.0]);
        assert_eq!(smooth_step(1.0), [1.0, 0.0, 0.0]);
        let s = smooth_step(0.5);
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 2.0).abs() < 1e-12 && s[2].abs() < 1e-12);
    }

    #[test]
    fn mollifier_has_unit_mass() {
        let m = gauss().integrate(-1.0, 1.0, |x| mollifier(x).0);
        assert!((m - 1.0).abs() < 1e-13);
    }

    #[test]
    fn relocation_sends_second_critical_point_to_first() {
        let l = Layout::new(0.07);
        let g = l.relocation(l.critical[1]);
        assert!((g[0] - l.critical[0]).abs() < 1e-15);
        assert!((0..=1000).all(|k| l.relocation(k as f64 / 1000.0)[1] > 0.0));
        assert!(l.psi(1, l.critical[0])[1].abs() < 1e-12);
        assert!(l.psi(2, l.critical[1])[1].abs() < 1e-12);
    }
}

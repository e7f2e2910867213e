//! Schwarzschild–de Sitter type models, horizon-penetrating slices and the
//! per-mode stationary operator pencil.
//!
//! Signature is (+,−,−,−) and f(r̃) = 1 − 2M/r̃ − Λr̃²/3. Slices are level sets
//! of t_* = t − h(r̃) with f·h′ = H(r̃); the tilt H runs from −1 at the event
//! horizon to +1 at the cosmological horizon, so the slice is ingoing at one
//! end and outgoing at the other.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("extremal or naked configuration: 9ΛM² = {0} ≥ 1")]
    Extremal(f64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("slicing failure at x = {x}: {reason}")]
    Slicing { x: f64, reason: String },
}

/// Spherically symmetric model with constant potential v0 and angular mode ℓ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub mass: f64,
    pub lambda: f64,
    pub v0: f64,
    pub ell: u32,
    /// Horizon radii in increasing order: [r_e, r_c] or [r_c] when M = 0.
    pub horizons: Vec<f64>,
    /// Surface gravities |f′(r_i)|/2 in the same order.
    pub kappa: Vec<f64>,
}

/// Build an admissible model. Requires v0 > 0.
pub fn build_model(mass: f64, lambda: f64, v0: f64, ell: u32) -> Result<ModelSpec, ModelError> {
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(ModelError::Domain(format!("potential v0 must be > 0, got {v0}")));
    }
    build_model_allow_zero_potential(mass, lambda, v0, ell)
}

/// Same as [`build_model`] but admits v0 = 0, used for zero-mode control runs.
pub fn build_model_allow_zero_potential(mass: f64, lambda: f64, v0: f64, ell: u32) -> Result<ModelSpec, ModelError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(ModelError::Domain(format!("Λ must be > 0, got {lambda}")));
    }
    if !(v0 >= 0.0) || !v0.is_finite() {
        return Err(ModelError::Domain(format!("potential v0 must be ≥ 0, got {v0}")));
    }
    if !(mass >= 0.0) || !mass.is_finite() {
        return Err(ModelError::Domain(format!("mass must be ≥ 0, got {mass}")));
    }
    let ext = 9.0 * lambda * mass * mass;
    if ext >= 1.0 {
        return Err(ModelError::Extremal(ext));
    }
    let horizons = horizon_radii(mass, lambda);
    let mut m = ModelSpec { mass, lambda, v0, ell, horizons, kappa: vec![] };
    m.kappa = m.horizons.iter().map(|&r| 0.5 * m.df(r).abs()).collect();
    if m.kappa.iter().any(|&k| !(k > 0.0)) {
        return Err(ModelError::Domain("degenerate horizon".into()));
    }
    Ok(m)
}

/// Positive roots of (Λ/3)r³ − r + 2M = 0 by the trigonometric cubic formula,
/// each polished by two Newton steps.
fn horizon_radii(mass: f64, lambda: f64) -> Vec<f64> {
    let s = lambda.sqrt();
    let theta = (-3.0 * mass * s).acos();
    let poly = |r: f64| lambda / 3.0 * r * r * r - r + 2.0 * mass;
    let dpoly = |r: f64| lambda * r * r - 1.0;
    let mut roots: Vec<f64> = (0..3)
        .map(|k| 2.0 / s * (theta / 3.0 - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
        .map(|mut r| {
            for _ in 0..2 {
                let d = dpoly(r);
                if d != 0.0 {
                    r -= poly(r) / d;
                }
            }
            r
        })
        .filter(|&r| r > 1e-12 * (1.0 / s))
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

impl ModelSpec {
    pub fn f(&self, r: f64) -> f64 {
        1.0 - 2.0 * self.mass / r - self.lambda * r * r / 3.0
    }
    pub fn df(&self, r: f64) -> f64 {
        2.0 * self.mass / (r * r) - 2.0 * self.lambda * r / 3.0
    }
    pub fn d2f(&self, r: f64) -> f64 {
        -4.0 * self.mass / (r * r * r) - 2.0 * self.lambda / 3.0
    }
    /// True for pure de Sitter (M = 0): the slice is a ball around r̃ = 0.
    pub fn is_ball(&self) -> bool {
        self.mass == 0.0
    }
    pub fn cosmological_radius(&self) -> f64 {
        *self.horizons.last().unwrap()
    }
    pub fn angular(&self) -> f64 {
        let l = self.ell as f64;
        l * (l + 1.0)
    }
}

/// Which boundary component a collar quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Inner boundary, the event horizon r̃ = r_e (annulus only).
    Event,
    /// Outer boundary, the cosmological horizon r̃ = r_c.
    Cosmological,
}

/// Horizon-penetrating slice with lapse/shift/induced-metric data.
///
/// On the annulus H(r̃) = −1 + 2(r̃ − r_e)/(r_c − r_e); on the ball H = r̃/r_c.
/// The inverse metric in (t, r̃) reads g^{tt} = q, g^{tr̃} = H, g^{r̃r̃} = −f
/// with q = (1 − H²)/f, and the spherical part is −r̃^{-2}.
#[derive(Debug, Clone, Serialize)]
pub struct SliceGeometry {
    pub model: ModelSpec,
    /// r̃ at x = 0 (r_e, or 0 for the ball).
    pub r_lo: f64,
    /// r̃ at x = 1 (r_c).
    pub r_hi: f64,
    /// Fraction of the chart treated as a boundary collar.
    pub collar_fraction: f64,
}

/// Tolerated relative violation for the slicing check.
const SLICE_SAMPLES: usize = 2001;

pub fn build_slice(model: &ModelSpec) -> Result<SliceGeometry, ModelError> {
    let (r_lo, r_hi) =
        if model.is_ball() { (0.0, model.cosmological_radius()) } else { (model.horizons[0], model.horizons[1]) };
    let s = SliceGeometry { model: model.clone(), r_lo, r_hi, collar_fraction: 0.4 };
    for i in 0..SLICE_SAMPLES {
        let x = i as f64 / (SLICE_SAMPLES - 1) as f64;
        let q = s.q(s.rt(x));
        if !(q > 0.0) || !q.is_finite() {
            return Err(ModelError::Slicing { x, reason: format!("A^-2 = {q} not positive") });
        }
    }
    Ok(s)
}

impl SliceGeometry {
    pub fn width(&self) -> f64 {
        self.r_hi - self.r_lo
    }
    /// Area radius at chart coordinate x ∈ [0, 1].
    pub fn rt(&self, x: f64) -> f64 {
        self.r_lo + self.width() * x
    }
    pub fn x_of(&self, rt: f64) -> f64 {
        (rt - self.r_lo) / self.width()
    }
    /// dr̃/dx.
    pub fn jac(&self) -> f64 {
        self.width()
    }

    pub fn tilt(&self, rt: f64) -> f64 {
        if self.model.is_ball() {
            rt / self.r_hi
        } else {
            -1.0 + 2.0 * (rt - self.r_lo) / self.width()
        }
    }
    pub fn dtilt(&self, _rt: f64) -> f64 {
        if self.model.is_ball() {
            1.0 / self.r_hi
        } else {
            2.0 / self.width()
        }
    }

    fn q_consts(&self) -> (f64, f64) {
        let l = self.width();
        (12.0 / (self.model.lambda * l * l), self.r_lo + self.r_hi)
    }

    /// q = (1 − H²)/f = A^{-2}, in factored form so it is regular at horizons.
    pub fn q(&self, rt: f64) -> f64 {
        if self.model.is_ball() {
            return 1.0;
        }
        let (c, s) = self.q_consts();
        c * rt / (rt + s)
    }
    pub fn dq(&self, rt: f64) -> f64 {
        if self.model.is_ball() {
            return 0.0;
        }
        let (c, s) = self.q_consts();
        c * s / ((rt + s) * (rt + s))
    }
    pub fn d2q(&self, rt: f64) -> f64 {
        if self.model.is_ball() {
            return 0.0;
        }
        let (c, s) = self.q_consts();
        -2.0 * c * s / ((rt + s) * (rt + s) * (rt + s))
    }

    pub fn lapse(&self, rt: f64) -> f64 {
        1.0 / self.q(rt).sqrt()
    }
    /// Radial shift W^{r̃} = −H/q.
    pub fn shift(&self, rt: f64) -> f64 {
        -self.tilt(rt) / self.q(rt)
    }
    pub fn k_rr(&self, rt: f64) -> f64 {
        self.q(rt)
    }
    pub fn k_sphere(&self, rt: f64) -> f64 {
        rt * rt
    }
    /// μ = g(T, T).
    pub fn mu(&self, rt: f64) -> f64 {
        self.model.f(rt)
    }
    /// k(W, W) computed from the shift.
    pub fn k_ww(&self, rt: f64) -> f64 {
        let w = self.shift(rt);
        self.k_rr(rt) * w * w
    }

    pub fn horizon_radius(&self, side: Side) -> Result<f64, ModelError> {
        match side {
            Side::Cosmological => Ok(self.r_hi),
            Side::Event if !self.model.is_ball() => Ok(self.r_lo),
            Side::Event => Err(ModelError::Domain("pure de Sitter has no event horizon".into())),
        }
    }
    pub fn kappa(&self, side: Side) -> Result<f64, ModelError> {
        Ok(0.5 * self.model.df(self.horizon_radius(side)?).abs())
    }
    /// +1 if the distance to `side` grows with r̃.
    pub fn direction(&self, side: Side) -> f64 {
        match side {
            Side::Event => 1.0,
            Side::Cosmological => -1.0,
        }
    }
    pub fn sides(&self) -> Vec<Side> {
        if self.model.is_ball() {
            vec![Side::Cosmological]
        } else {
            vec![Side::Event, Side::Cosmological]
        }
    }

    /// Radial shift in geodesic normal coordinates of `side`; equals A on the horizon.
    pub fn shift_normal(&self, side: Side, rt: f64) -> f64 {
        self.direction(side) * self.q(rt).sqrt() * self.shift(rt)
    }

    /// Induced-metric distance from `side`, capped at the collar edge.
    pub fn distance(&self, side: Side, x: f64) -> f64 {
        let xs = match side {
            Side::Event => x.min(self.collar_fraction),
            Side::Cosmological => x.max(1.0 - self.collar_fraction),
        };
        let a = match side {
            Side::Event => self.r_lo,
            Side::Cosmological => self.r_hi,
        };
        let b = self.rt(xs);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if hi <= lo {
            return 0.0;
        }
        quadrature::integrate(|r| self.q(r).sqrt(), lo, hi, 1e-14).integral
    }

    /// Boundary distance used by b-norms: min over horizons, capped at the collar.
    pub fn boundary_distance(&self, x: f64) -> f64 {
        self.sides().into_iter().map(|s| self.distance(s, x)).fold(f64::INFINITY, f64::min)
    }
}

/// κ = 1/2 and G(dr) = −r normalization at a designated horizon.
///
/// Time is rescaled by s_t = 2κ_d and the metric conformally by
/// F = 1/(s_t² q), which makes the lapse identically one. The collar
/// function is r = s_t ∫ q dr̃ measured from the designated horizon.
#[derive(Debug, Clone, Serialize)]
pub struct Normalization {
    pub slice: SliceGeometry,
    pub designated: Side,
    pub time_scale: f64,
    /// κ at the other horizon divided by κ at the designated one, if any.
    pub kappa_ratio: Option<f64>,
}

pub fn normalize(slice: &SliceGeometry, designated: Side) -> Result<Normalization, ModelError> {
    let kd = slice.kappa(designated)?;
    let other = slice.sides().into_iter().find(|&s| s != designated);
    let kappa_ratio = match other {
        Some(s) => Some(slice.kappa(s)? / kd),
        None => None,
    };
    Ok(Normalization { slice: slice.clone(), designated, time_scale: 2.0 * kd, kappa_ratio })
}

/// Default designation: event horizon when present, else the cosmological one.
pub fn default_side(model: &ModelSpec) -> Side {
    if model.is_ball() {
        Side::Cosmological
    } else {
        Side::Event
    }
}

impl Normalization {
    pub fn horizon(&self) -> f64 {
        self.slice.horizon_radius(self.designated).unwrap()
    }
    fn dir(&self) -> f64 {
        self.slice.direction(self.designated)
    }
    /// Normalized frequency ω̂ = ω/s_t.
    pub fn to_normalized(&self, omega: num_complex::Complex64) -> num_complex::Complex64 {
        omega / self.time_scale
    }
    /// Physical frequency ω = s_t ω̂.
    pub fn to_physical(&self, omega_hat: num_complex::Complex64) -> num_complex::Complex64 {
        omega_hat * self.time_scale
    }
    pub fn conformal(&self, rt: f64) -> f64 {
        1.0 / (self.time_scale * self.time_scale * self.slice.q(rt))
    }

    /// Collar coordinate r(r̃); negative values continue past the horizon.
    pub fn r_of(&self, rt: f64) -> f64 {
        let rh = self.horizon();
        let st = self.time_scale;
        if self.slice.model.is_ball() {
            return self.dir() * st * (rt - rh);
        }
        let (c, s) = self.slice.q_consts();
        // ∫ c r/(r+s) dr = c[r − s ln(r+s)]
        self.dir() * st * c * ((rt - rh) - s * ((rt + s) / (rh + s)).ln())
    }

    /// Inverse of [`Self::r_of`] by Newton iteration.
    pub fn rt_of(&self, r: f64) -> f64 {
        let st = self.time_scale;
        let mut rt = self.horizon() + self.dir() * r / (st * self.slice.q(self.horizon()));
        for _ in 0..60 {
            let g = self.r_of(rt) - r;
            let dg = self.dir() * st * self.slice.q(rt);
            let step = g / dg;
            rt -= step;
            if step.abs() <= 1e-16 * rt.abs().max(1.0) {
                break;
            }
        }
        rt
    }

    /// Collar length in r covered by the slice's collar fraction.
    pub fn collar(&self) -> f64 {
        let x = match self.designated {
            Side::Event => self.slice.collar_fraction,
            Side::Cosmological => 1.0 - self.slice.collar_fraction,
        };
        self.r_of(self.slice.rt(x))
    }

    /// Ĥ(r) = ±H, equal to −1 on the designated horizon.
    pub fn h_hat(&self, r: f64) -> f64 {
        self.dir() * self.slice.tilt(self.rt_of(r))
    }
    pub fn dh_hat(&self, r: f64) -> f64 {
        let rt = self.rt_of(r);
        self.slice.dtilt(rt) / (self.time_scale * self.slice.q(rt))
    }
    /// Angular coefficient κ_ang(r) = 1/(s_t² q r̃²).
    pub fn k_ang(&self, r: f64) -> f64 {
        let rt = self.rt_of(r);
        1.0 / (self.time_scale * self.time_scale * self.slice.q(rt) * rt * rt)
    }
    pub fn dk_ang(&self, r: f64) -> f64 {
        let rt = self.rt_of(r);
        let q = self.slice.q(rt);
        let st = self.time_scale;
        let d_drt = -(self.slice.dq(rt) * rt * rt + 2.0 * q * rt) / (st * st * q * q * rt.powi(4));
        d_drt * self.dir() / (st * q)
    }
    pub fn k0_ang(&self) -> f64 {
        self.k_ang(0.0)
    }

    /// Normalized dual metric G(dr) = −(1 − Ĥ²).
    pub fn g_dr(&self, r: f64) -> f64 {
        let h = self.h_hat(r);
        -(1.0 - h * h)
    }

    /// Surface gravity of the normalized metric at `side`, from the limit of
    /// −Ĝ(dμ̂)/(4μ̂) with μ̂ = 1 − H².
    pub fn normalized_kappa(&self, side: Side) -> Result<f64, ModelError> {
        let rh = self.slice.horizon_radius(side)?;
        let dir = self.slice.direction(side);
        let st = self.time_scale;
        let est = |eps: f64| {
            let rt = rh + dir * eps;
            let h = self.slice.tilt(rt);
            let mu = 1.0 - h * h;
            let dmu = -2.0 * h * self.slice.dtilt(rt);
            let gamma = self.slice.model.f(rt) / (st * st * self.slice.q(rt));
            (gamma * dmu * dmu / (4.0 * mu)).sqrt()
        };
        // Richardson in ε: the estimate is linear in ε near the horizon.
        let e = 1e-5 * self.slice.width();
        Ok(2.0 * est(e) - est(2.0 * e))
    }
}

/// Coefficients of P(ω) = K0 − iωK1 + ω²K2 for one angular mode, as
/// operators in r̃:
///
/// K0 u = −f u″ − (f′ + 2f/r̃) u′ + (ℓ(ℓ+1)/r̃² + v0) u,
/// K1 u = 2H u′ + (H′ + 2H/r̃) u,
/// K2 u = −q u.
///
/// The L² pairing uses the density A·dS_X = r̃² dr̃.
#[derive(Debug, Clone, Serialize)]
pub struct PencilCoefficients {
    pub slice: SliceGeometry,
}

pub fn reduce(slice: &SliceGeometry) -> PencilCoefficients {
    PencilCoefficients { slice: slice.clone() }
}

/// Coefficients at one radius: (a2, a1, a0) for K0, (b1, b0) for K1, c0 for K2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCoefficients {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
    pub b1: f64,
    pub b0: f64,
    pub c0: f64,
}

impl PencilCoefficients {
    pub fn model(&self) -> &ModelSpec {
        &self.slice.model
    }
    /// Coefficients at r̃ > 0.
    pub fn at(&self, rt: f64) -> PointCoefficients {
        let m = &self.slice.model;
        let f = m.f(rt);
        let h = self.slice.tilt(rt);
        PointCoefficients {
            a2: -f,
            a1: -(m.df(rt) + 2.0 * f / rt),
            a0: m.angular() / (rt * rt) + m.v0,
            b1: 2.0 * h,
            b0: self.slice.dtilt(rt) + 2.0 * h / rt,
            c0: -self.slice.q(rt),
        }
    }
    /// L² density r̃² (per unit r̃).
    pub fn density(&self, rt: f64) -> f64 {
        rt * rt
    }
    /// Boundary flux coefficient r̃²H entering [r̃²H u v̄].
    pub fn flux(&self, rt: f64) -> f64 {
        rt * rt * self.slice.tilt(rt)
    }

    /// Order-2 (semiclassical principal) symbol of P at (r̃, σ, η) and frequency z:
    /// f σ² + 2Hzσ − q z² + η²/r̃². Equals −G(ξ − z dt).
    pub fn principal_symbol(&self, rt: f64, sigma: f64, eta: f64, z: f64) -> f64 {
        let c = self.at(rt);
        -c.a2 * sigma * sigma + c.b1 * z * sigma + c.c0 * z * z + eta * eta / (rt * rt)
    }

    /// Physical dual metric G(ξ) in (t, r̃) coordinates with ξ = τ dt + σ dr̃ + angular η.
    pub fn dual_metric(&self, rt: f64, tau: f64, sigma: f64, eta: f64) -> f64 {
        let s = &self.slice;
        s.q(rt) * tau * tau + 2.0 * s.tilt(rt) * tau * sigma - s.model.f(rt) * sigma * sigma - eta * eta / (rt * rt)
    }
}

//! First-order generator, RK4 evolution and the logarithmic energy envelope.
//!
//! With ∂_t ↦ −iω the pencil is the symbol of Q∂_t²v + K1∂_tv + K0v = 0,
//! Q = −K2 > 0. On states U = (v, ∂_tv) this reads ∂_tU = −iBU with
//! −iB = [[0, 1], [−L₂, −L₁]], L₂ = Q⁻¹K0 and L₁ = Q⁻¹K1, so eigenvalues of B
//! are the frequencies ω of modes e^{−iωt}.

use crate::spectra::extended::refine_standard;
use crate::spectra::grid::DdMatrix;
use crate::spectra::{smallest_singular_value, OperatorPencil, SpectraError};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecayError {
    #[error("horizon error: T_final = {0} < 1")]
    Horizon(f64),
    #[error("time step must be positive and finite, got {0}")]
    Step(f64),
    #[error("unstable step: dt = {dt} amplifies by {amplification} (stable below {limit})")]
    Instability { dt: f64, amplification: f64, limit: f64 },
    #[error("energy grew by {ratio:e} at t = {t}")]
    Growth { t: f64, ratio: f64 },
    #[error("trajectory spans {0:.3} decades in t (need 2)")]
    InsufficientHorizon(f64),
    #[error("zero initial data")]
    ZeroData,
    #[error("no mode found near {0}")]
    Mode(Complex64),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

/// Ratio E(t)/E(0) above which evolution of a damped model is aborted.
pub const GROWTH_GUARD: f64 = 1e8;
/// sup_t √(E(t)/E(0)) above which a trajectory is not called bounded.
pub const BOUNDEDNESS_CAP: f64 = 1e3;
/// Samples of the trajectory, log-spaced in t.
pub const SAMPLES: usize = 241;
/// Fraction of the RK4 stability interval used for the default step.
const STEP_SAFETY: f64 = 0.9;
/// RK4 reaches 2√2 along the imaginary axis and 2.785 along the negative reals.
const RK4_REACH: f64 = 2.0 * std::f64::consts::SQRT_2;

/// −iB on (v, ∂_tv) together with the blocks it is built from.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    /// Number of nodes; states have length 2m.
    pub m: usize,
    pub a: DMatrix<f64>,
    pub l2: DMatrix<f64>,
    pub l1: DMatrix<f64>,
    pub gram_l2: DMatrix<f64>,
    pub gram_h1: DMatrix<f64>,
    /// Eigenvalues of B, i.e. ω with e^{−iωt} modes.
    pub spectrum: Vec<Complex64>,
    /// −iB in double-double, for eigenvalue refinement.
    pub extended: DdMatrix,
}

pub fn assemble_generator(pencil: &OperatorPencil) -> GeneratorMatrix {
    let m = pencil.len();
    let a = pencil.companion();
    let l2 = -a.view((m, 0), (m, m)).into_owned();
    let l1 = -a.view((m, m), (m, m)).into_owned();
    let spectrum = a.complex_eigenvalues().iter().map(|s| Complex64::i() * s).collect();
    GeneratorMatrix {
        m,
        a,
        l2,
        l1,
        gram_l2: pencil.gram_l2.clone(),
        gram_h1: pencil.gram_h1.clone(),
        spectrum,
        extended: pencil.extended().companion(),
    }
}

fn quad(g: &DMatrix<f64>, u: &DVector<Complex64>) -> f64 {
    let gu = g.map(Complex64::from) * u;
    u.dotc(&gu).re.max(0.0)
}

/// 1 + z + z²/2 + z³/6 + z⁴/24.
pub fn rk4_factor(z: Complex64) -> Complex64 {
    1.0 + z * (1.0 + z / 2.0 * (1.0 + z / 3.0 * (1.0 + z / 4.0)))
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        2 * self.m
    }

    /// B = i(−iB).
    pub fn b_matrix(&self) -> DMatrix<Complex64> {
        self.a.map(|v| Complex64::new(0.0, v))
    }

    /// σ_min(B − ω).
    pub fn eigen_defect(&self, omega: Complex64) -> f64 {
        let mut b = self.b_matrix();
        for j in 0..self.dim() {
            b[(j, j)] -= omega;
        }
        smallest_singular_value(b)
    }

    /// Eigenvalue of B nearest to ω.
    pub fn nearest(&self, omega: Complex64) -> Complex64 {
        *self
            .spectrum
            .iter()
            .min_by(|a, b| (**a - omega).norm().total_cmp(&(**b - omega).norm()))
            .expect("empty spectrum")
    }

    /// Eigenvalue of B near `seed` by double-double inverse iteration on B.
    /// The f64 spectrum of this non-normal matrix can be off by far more.
    pub fn refine_eigenvalue(&self, seed: Complex64) -> Option<Complex64> {
        let s0 = Complex64::new(0.0, -1.0) * seed;
        refine_standard(&self.extended, s0, 0.2 * seed.norm().max(0.05), 16).map(|r| Complex64::i() * r.omega)
    }

    /// The least damped frequency with Re ω ≥ 0.
    pub fn slowest(&self) -> Complex64 {
        *self.spectrum.iter().filter(|w| w.re >= 0.0).max_by(|a, b| a.im.total_cmp(&b.im)).expect("empty spectrum")
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectrum.iter().map(|w| w.norm()).fold(0.0, f64::max)
    }

    /// Default step: a fixed fraction of the RK4 stability interval over ρ(−iB).
    pub fn stable_step(&self) -> f64 {
        STEP_SAFETY * RK4_REACH / self.spectral_radius()
    }

    /// max |R(dt·s)| over eigenvalues s of −iB.
    pub fn amplification(&self, dt: f64) -> f64 {
        self.spectrum.iter().map(|w| rk4_factor(Complex64::new(0.0, -dt) * w).norm()).fold(0.0, f64::max)
    }

    /// E = ‖v‖²_{H¹} + ‖∂_tv‖²_{L²}.
    pub fn energy(&self, u: &DVector<Complex64>) -> f64 {
        let v = u.rows(0, self.m).into_owned();
        let w = u.rows(self.m, self.m).into_owned();
        quad(&self.gram_h1, &v) + quad(&self.gram_l2, &w)
    }

    /// ‖v₀‖_{H¹} + ‖L₂v₀ + L₁v₁‖_{L²} + ‖v₁‖_{H¹}, the discrete norm on D(B).
    pub fn graph_norm(&self, u: &DVector<Complex64>) -> f64 {
        let v = u.rows(0, self.m).into_owned();
        let w = u.rows(self.m, self.m).into_owned();
        let lv = self.l2.map(Complex64::from) * &v + self.l1.map(Complex64::from) * &w;
        quad(&self.gram_h1, &v).sqrt() + quad(&self.gram_l2, &lv).sqrt() + quad(&self.gram_h1, &w).sqrt()
    }

    /// One RK4 step for ∂_tU = (−iB)U as a matrix.
    pub fn step_matrix(&self, dt: f64) -> DMatrix<f64> {
        let n = self.dim();
        let ha = &self.a * dt;
        let id = DMatrix::<f64>::identity(n, n);
        let mut s = &id + &ha / 4.0;
        s = &id + &ha * s / 3.0;
        s = &id + &ha * s / 2.0;
        &id + &ha * s
    }

    /// State (u, −iωu) of a mode.
    pub fn mode_state(&self, omega: Complex64, mode: &[Complex64]) -> DVector<Complex64> {
        let v = DVector::from_column_slice(mode);
        let w = &v * Complex64::new(0.0, -1.0) * omega;
        let mut u = DVector::zeros(self.dim());
        u.rows_mut(0, self.m).copy_from(&v);
        u.rows_mut(self.m, self.m).copy_from(&w);
        u
    }
}

/// Initial data for an evolution, with v on the nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataFamily {
    /// v = exp(−((x − center)/width)²), ∂_tv = 0 in the slice coordinate x ∈ [0, 1].
    Gaussian { center: f64, width: f64 },
    /// The least damped mode of the pencil.
    Mode,
    /// v = 1, ∂_tv = 0.
    Constant,
}

impl Default for DataFamily {
    fn default() -> Self {
        DataFamily::Gaussian { center: 0.5, width: 0.15 }
    }
}

pub fn initial_data(
    pencil: &OperatorPencil,
    gen: &GeneratorMatrix,
    family: DataFamily,
) -> Result<DVector<Complex64>, DecayError> {
    let m = gen.m;
    let from_v = |f: &dyn Fn(f64) -> f64| {
        let mut u = DVector::zeros(2 * m);
        for (j, &x) in pencil.grid.x.iter().enumerate() {
            u[j] = Complex64::from(f(x));
        }
        u
    };
    match family {
        DataFamily::Gaussian { center, width } => Ok(from_v(&|x| (-((x - center) / width).powi(2)).exp())),
        DataFamily::Constant => Ok(from_v(&|_| 1.0)),
        DataFamily::Mode => {
            let seed = gen.slowest();
            let r = pencil
                .refine(seed, 1e-3 * seed.norm().max(1e-3), 16)
                .filter(|r| !r.mode.is_empty())
                .ok_or(DecayError::Mode(seed))?;
            Ok(gen.mode_state(r.omega, &r.mode))
        }
    }
}

/// States sampled at log-spaced times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub states: Vec<DVector<Complex64>>,
}

/// Step counts 0 < n₁ < … < n_total, roughly geometric.
fn sample_steps(total: usize) -> Vec<usize> {
    let mut out = vec![0usize];
    for k in 0..SAMPLES - 1 {
        let n = (total as f64).powf(k as f64 / (SAMPLES - 2) as f64).round() as usize;
        if n > *out.last().unwrap() {
            out.push(n);
        }
    }
    if *out.last().unwrap() != total {
        out.push(total);
    }
    out
}

/// Real and imaginary parts as the two columns of a real matrix.
fn split(u: &DVector<Complex64>) -> DMatrix<f64> {
    DMatrix::from_fn(u.len(), 2, |i, j| if j == 0 { u[i].re } else { u[i].im })
}

fn join(x: &DMatrix<f64>) -> DVector<Complex64> {
    DVector::from_fn(x.nrows(), |i, _| Complex64::new(x[(i, 0)], x[(i, 1)]))
}

/// Applies `steps` RK4 steps of size dt (negative dt steps backward).
pub fn propagate(gen: &GeneratorMatrix, data: &DVector<Complex64>, dt: f64, steps: usize) -> DVector<Complex64> {
    let s = gen.step_matrix(dt);
    let mut x = split(data);
    for _ in 0..steps {
        x = &s * x;
    }
    join(&x)
}

/// RK4 evolution to `t_final` with a step no larger than `dt`, adjusted so
/// that a whole number of steps lands on `t_final`.
pub fn evolve(
    gen: &GeneratorMatrix,
    data: &DVector<Complex64>,
    t_final: f64,
    dt: f64,
    damped: bool,
) -> Result<Trajectory, DecayError> {
    if !(t_final >= 1.0) {
        return Err(DecayError::Horizon(t_final));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DecayError::Step(dt));
    }
    let total = (t_final / dt).ceil() as usize;
    let h = t_final / total as f64;
    let amp = gen.amplification(h);
    if amp > 1.0 + 1e-9 {
        return Err(DecayError::Instability { dt: h, amplification: amp, limit: gen.stable_step() / STEP_SAFETY });
    }
    let steps = sample_steps(total);
    let s = gen.step_matrix(h);
    let e0 = gen.energy(data);
    let mut x = split(data);
    let mut out = Trajectory { dt: h, times: vec![], energy: vec![], states: vec![] };
    let mut prev = 0;
    for &n in &steps {
        for _ in prev..n {
            x = &s * x;
        }
        prev = n;
        let u = join(&x);
        let e = gen.energy(&u);
        let t = n as f64 * h;
        if damped && e0 > 0.0 && !(e <= GROWTH_GUARD * e0) {
            return Err(DecayError::Growth { t, ratio: e / e0 });
        }
        out.times.push(t);
        out.energy.push(e);
        out.states.push(u);
    }
    Ok(out)
}

/// Independent evolutions in parallel.
pub fn evolve_many(
    gen: &GeneratorMatrix,
    data: &[DVector<Complex64>],
    t_final: f64,
    dt: f64,
    damped: bool,
) -> Vec<Result<Trajectory, DecayError>> {
    data.par_iter().map(|u| evolve(gen, u, t_final, dt, damped)).collect()
}

/// Least-squares slope of ln E against t over samples with t in [t0, t1].
pub fn energy_rate(traj: &Trajectory, t0: f64, t1: f64) -> f64 {
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.energy)
        .filter(|(t, e)| **t >= t0 && **t <= t1 && **e > 0.0)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    let n = pts.len() as f64;
    let (st, se) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mt, me) = (st / n, se / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mt) * (p.1 - me), a.1 + (p.0 - mt).powi(2)));
    num / den
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// C·‖data‖_{D(B)}/log(2 + t).
    pub envelope: Vec<f64>,
    /// ‖(v₀, v₁)‖ in the discrete graph norm.
    pub data_norm: f64,
    /// √E(0).
    pub energy_norm: f64,
    /// Smallest C with √E(t) ≤ C‖data‖/log(2 + t) on the samples.
    pub c_fit: f64,
    /// sup_t √(E(t)/E(0)).
    pub c_bounded: f64,
    pub bounded: bool,
    /// √E(t)·log(2 + t) peaks before the last decade of the run.
    pub log_decay: bool,
}

pub fn fit_log_decay(gen: &GeneratorMatrix, traj: &Trajectory) -> Result<DecayReport, DecayError> {
    let t_end = *traj.times.last().unwrap_or(&0.0);
    let t_first = traj.times.iter().copied().find(|&t| t > 0.0).unwrap_or(t_end);
    let decades = if t_first > 0.0 { (t_end / t_first).log10() } else { 0.0 };
    if decades < 2.0 {
        return Err(DecayError::InsufficientHorizon(decades));
    }
    let data = &traj.states[0];
    let data_norm = gen.graph_norm(data);
    let energy_norm = traj.energy[0].sqrt();
    if !(data_norm > 0.0 && energy_norm > 0.0) {
        return Err(DecayError::ZeroData);
    }
    let weighted: Vec<f64> = traj.times.iter().zip(&traj.energy).map(|(t, e)| e.sqrt() * (2.0 + t).ln()).collect();
    let c_fit = weighted.iter().cloned().fold(0.0, f64::max) / data_norm;
    let c_bounded = traj.energy.iter().map(|e| e.sqrt()).fold(0.0, f64::max) / energy_norm;
    let split = 0.1 * t_end;
    let (early, late) = traj.times.iter().zip(&weighted).fold((0.0f64, 0.0f64), |acc, (t, w)| {
        if *t < split {
            (acc.0.max(*w), acc.1)
        } else {
            (acc.0, acc.1.max(*w))
        }
    });
    Ok(DecayReport {
        times: traj.times.clone(),
        energy: traj.energy.clone(),
        envelope: traj.times.iter().map(|t| c_fit * data_norm / (2.0 + t).ln()).collect(),
        data_norm,
        energy_norm,
        c_fit,
        c_bounded,
        bounded: c_bounded.is_finite() && c_bounded <= BOUNDEDNESS_CAP,
        log_decay: c_fit.is_finite() && late < early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_steps_are_increasing_and_hit_the_end() {
        for total in [1, 7, 240, 100_000] {
            let s = sample_steps(total);
            assert_eq!(s[0], 0);
            assert_eq!(*s.last().unwrap(), total);
            assert!(s.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn rk4_factor_is_truncated_exponential() {
        let z = Complex64::new(-0.01, 0.02);
        // error is z⁵/120 ≈ 5e-11
        assert!((rk4_factor(z) - z.exp()).norm() < 1e-10);
        assert_eq!(rk4_factor(Complex64::new(0.0, 0.0)), Complex64::new(1.0, 0.0));
    }
}

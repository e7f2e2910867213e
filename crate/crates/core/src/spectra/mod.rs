//! Discretized pencil, resonances, resolvent norms and the strip scan.

pub mod extended;
pub mod grid;
mod scan;

pub use grid::{Grid, Scheme};
pub use scan::{fit_log_norms, scan_strip, DepthProfile, ScanPoint, ScanResult, StripFit};

use crate::model::PencilCoefficients;
use extended::DdPencil;
use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("size error: N = {0} < 8")]
    Size(usize),
    #[error("Gram matrix not positive definite")]
    Gram,
    #[error("eigensolver failure")]
    Eigen,
    #[error("singular pencil at ω = {0}")]
    Singular(Complex64),
    #[error("fit failure: {0} usable frequencies (need ≥ 4)")]
    Fit(usize),
}

/// Grid size used to seed resonance searches.
pub const SEED_N: usize = 48;
/// Relative drift under N → 2N below which a resonance counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-6;

/// Collocated P(ω) = K0 − iωK1 + ω²K2 with L², H¹ and H¹_b Gram matrices.
#[derive(Debug, Clone)]
pub struct OperatorPencil {
    pub coeffs: PencilCoefficients,
    pub grid: Grid,
    pub n: usize,
    pub rt: Vec<f64>,
    pub k0: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k2: DVector<f64>,
    /// d/dr̃ on the nodes.
    pub d1: DMatrix<f64>,
    /// Quadrature weights for ∫ g r̃² dr̃.
    pub mass: DVector<f64>,
    pub gram_l2: DMatrix<f64>,
    pub gram_h1: DMatrix<f64>,
    pub gram_h1b: DMatrix<f64>,
    /// Node indices lying on a horizon.
    pub boundary: Vec<usize>,
    extended: OnceLock<DdPencil>,
}

pub fn discretize(coeffs: &PencilCoefficients, n: usize, scheme: Scheme) -> Result<OperatorPencil, SpectraError> {
    if n < 8 {
        return Err(SpectraError::Size(n));
    }
    let s = &coeffs.slice;
    let model = &s.model;
    let grid = if model.is_ball() {
        let sign = if model.ell.is_multiple_of(2) { 1.0 } else { -1.0 };
        Grid::folded(scheme, n, sign)
    } else {
        Grid::interval(scheme, n)
    };
    let m = grid.len();
    let jac = s.jac();
    let rt: Vec<f64> = grid.x.iter().map(|&x| s.rt(x)).collect();
    let dx1 = grid.d1.to_f64();
    let dx2 = grid.d2.to_f64();
    let d1 = &dx1 / jac;
    let d2 = &dx2 / (jac * jac);
    let mut k0 = DMatrix::zeros(m, m);
    let mut k1 = DMatrix::zeros(m, m);
    let mut k2 = DVector::zeros(m);
    for i in 0..m {
        let c = coeffs.at(rt[i]);
        for j in 0..m {
            k0[(i, j)] = c.a2 * d2[(i, j)] + c.a1 * d1[(i, j)];
            k1[(i, j)] = c.b1 * d1[(i, j)];
        }
        k0[(i, i)] += c.a0;
        k1[(i, i)] += c.b0;
        k2[i] = c.c0;
    }
    let mass = DVector::from_fn(m, |i, _| grid.quad[i] * jac * rt[i] * rt[i]);
    let plain = DVector::from_fn(m, |i, _| grid.quad[i] * jac);
    let ang = model.angular();
    let gram_l2 = DMatrix::from_diagonal(&mass);
    let kinetic = |weight: &dyn Fn(usize) -> f64| {
        let w = DVector::from_fn(m, |i, _| mass[i] * weight(i) / s.q(rt[i]));
        d1.transpose() * DMatrix::from_diagonal(&w) * &d1
    };
    let angular = DMatrix::from_diagonal(&DVector::from_fn(m, |i, _| plain[i] * ang));
    let gram_h1 = &gram_l2 + kinetic(&|_| 1.0) + &angular;
    // b-weight: boundary distance capped at 1 so that H¹_b ≤ H¹
    let rb: Vec<f64> = grid.x.iter().map(|&x| s.boundary_distance(x).min(1.0)).collect();
    let gram_h1b = &gram_l2 + kinetic(&|i| rb[i] * rb[i]) + &angular;
    let boundary = if model.is_ball() { vec![m - 1] } else { vec![0, m - 1] };
    Ok(OperatorPencil {
        coeffs: coeffs.clone(),
        grid,
        n,
        rt,
        k0,
        k1,
        k2,
        d1,
        mass,
        gram_l2,
        gram_h1,
        gram_h1b,
        boundary,
        extended: OnceLock::new(),
    })
}

/// Which first-order norm measures the output of the resolvent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Norm {
    H1,
    H1b,
    L2,
}

impl OperatorPencil {
    pub fn len(&self) -> usize {
        self.rt.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rt.is_empty()
    }
    pub fn scheme(&self) -> Scheme {
        self.grid.scheme
    }

    /// P(ω) = K0 − iωK1 + ω²K2.
    pub fn matrix(&self, omega: Complex64) -> DMatrix<Complex64> {
        let i = Complex64::i();
        let mut p = self.k0.map(Complex64::from) - self.k1.map(|v| i * omega * v);
        let w2 = omega * omega;
        for j in 0..self.len() {
            p[(j, j)] += w2 * self.k2[j];
        }
        p
    }

    /// Semiclassical P(z) = h²P(z/h).
    pub fn semiclassical_matrix(&self, z: Complex64, h: f64) -> DMatrix<Complex64> {
        self.matrix(semiclassical_map(z, h)) * Complex64::from(h * h)
    }

    pub fn extended(&self) -> &DdPencil {
        self.extended.get_or_init(|| DdPencil::build(&self.coeffs, &self.grid))
    }

    pub fn gram(&self, norm: Norm) -> &DMatrix<f64> {
        match norm {
            Norm::H1 => &self.gram_h1,
            Norm::H1b => &self.gram_h1b,
            Norm::L2 => &self.gram_l2,
        }
    }

    /// ⟨u, v⟩ with density r̃² dr̃.
    pub fn inner(&self, u: &DVector<Complex64>, v: &DVector<Complex64>) -> Complex64 {
        (0..self.len()).map(|j| u[j] * v[j].conj() * self.mass[j]).sum()
    }

    pub fn norm_of(&self, norm: Norm, u: &DVector<Complex64>) -> f64 {
        let g = self.gram(norm).map(Complex64::from);
        (u.adjoint() * g * u)[(0, 0)].re.max(0.0).sqrt()
    }

    /// [r̃²H u v̄] evaluated between the boundary nodes, the pairing left over
    /// from integrating K1 by parts.
    pub fn flux(&self, u: &DVector<Complex64>, v: &DVector<Complex64>) -> Complex64 {
        let last = self.len() - 1;
        self.boundary
            .iter()
            .map(|&j| {
                let outward = if j == last { 1.0 } else { -1.0 };
                u[j] * v[j].conj() * self.coeffs.flux(self.rt[j]) * outward
            })
            .sum()
    }

    /// |⟨P(ω)u, v⟩ − ⟨u, P(ω̄)v⟩ + 2iω[r̃²H u v̄]|: vanishes for real ω up to discretization.
    pub fn adjoint_defect(&self, omega: f64, u: &DVector<Complex64>, v: &DVector<Complex64>) -> f64 {
        let w = Complex64::from(omega);
        let p = self.matrix(w);
        let lhs = self.inner(&(&p * u), v);
        let rhs = self.inner(u, &(&p * v));
        (lhs - rhs + Complex64::i() * w * 2.0 * self.flux(u, v)).norm()
    }

    /// Residual of hz Σ r̃_h²|u_h|² = −Im⟨P(z)u, u⟩.
    pub fn greens_identity_residual(&self, u: &DVector<Complex64>, z: f64, h: f64) -> f64 {
        let (lhs, rhs) = self.greens_sides(u, z, h);
        (lhs - rhs).abs()
    }

    /// Both sides of the Green's formula: (boundary, volume).
    pub fn greens_sides(&self, u: &DVector<Complex64>, z: f64, h: f64) -> (f64, f64) {
        let pz = self.semiclassical_matrix(Complex64::from(z), h);
        let boundary: f64 = self.boundary.iter().map(|&j| self.rt[j] * self.rt[j] * u[j].norm_sqr()).sum();
        let volume = -self.inner(&(pz * u), u).im;
        (h * z * boundary, volume)
    }

    /// Whitening factors R with Gram = RᵀR.
    fn factor(&self, norm: Norm) -> Result<DMatrix<f64>, SpectraError> {
        let c = Cholesky::new(self.gram(norm).clone()).ok_or(SpectraError::Gram)?;
        Ok(c.l().transpose())
    }

    /// ‖P(ω)⁻¹‖ from L² to `norm`, as 1/σ_min(R_L P R_N⁻¹).
    pub fn resolvent_norm(&self, omega: Complex64, norm: Norm) -> Result<f64, SpectraError> {
        let rl = self.factor(Norm::L2)?;
        let rn = self.factor(norm)?;
        let rn_inv = rn.clone().try_inverse().ok_or(SpectraError::Gram)?;
        let m = rl.map(Complex64::from) * self.matrix(omega) * rn_inv.map(Complex64::from);
        let s = smallest_singular_value(m);
        if !(s > f64::MIN_POSITIVE) {
            return Err(SpectraError::Singular(omega));
        }
        Ok(1.0 / s)
    }

    /// σ_min(P(ω)) relative to the largest entry of P(ω).
    pub fn relative_residual(&self, omega: Complex64) -> f64 {
        let p = self.matrix(omega);
        let scale = p.iter().map(|z| z.norm()).fold(0.0, f64::max);
        smallest_singular_value(p) / scale
    }

    /// Newton refinement of an eigenvalue: double-double for collocation,
    /// f64 for finite differences (whose pencils are far better conditioned).
    pub fn refine(&self, seed: Complex64, max_move: f64, max_iter: usize) -> Option<extended::Refined> {
        match self.scheme() {
            Scheme::Collocation => extended::refine(self.extended(), seed, max_move, max_iter),
            Scheme::FiniteDifference4 => self.refine_f64(seed, max_move, max_iter),
        }
    }

    fn refine_f64(&self, seed: Complex64, max_move: f64, max_iter: usize) -> Option<extended::Refined> {
        let n = self.len();
        let b = DVector::from_fn(n, |i, _| {
            Complex64::new(1.0 + 0.5 * (0.7 * i as f64).sin(), 0.3 * (1.3 * i as f64).cos())
        });
        let c = DVector::from_fn(n, |i, _| {
            Complex64::new(1.0 + 0.5 * (1.1 * i as f64).cos(), -0.2 * (0.9 * i as f64).sin())
        });
        let scale = seed.norm().max(1e-3);
        let mut w = seed;
        let mut prev = f64::INFINITY;
        for it in 0..max_iter {
            let lu = self.matrix(w).lu();
            let Some(x) = lu.solve(&b) else {
                return Some(extended::Refined { omega: w, mode: vec![], iterations: it });
            };
            let mut dx = self.k1.map(Complex64::from) * &x * Complex64::new(0.0, -1.0);
            for j in 0..n {
                dx[j] += 2.0 * w * self.k2[j] * x[j];
            }
            let y = lu.solve(&dx)?;
            let step = c.dot(&x) / c.dot(&y);
            let st = step.norm();
            if !st.is_finite() {
                return None;
            }
            w -= step;
            if (w - seed).norm() > max_move {
                return None;
            }
            if st <= 1e-15 * scale || (st <= 1e-6 * scale && st > 0.25 * prev) {
                let m = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
                return Some(extended::Refined {
                    omega: w,
                    mode: x.iter().map(|z| z / m).collect(),
                    iterations: it + 1,
                });
            }
            prev = st;
        }
        None
    }

    /// Real companion matrix for s = −iω acting on (u, su):
    /// [[0, I], [−Q⁻¹K0, −Q⁻¹K1]] with Q = −K2 = A^{-2}.
    pub fn companion(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut a = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            a[(i, m + i)] = 1.0;
            // s²(−K2)u + sK1u + K0u = 0 since ω² = −s² and −iω = s
            let qi = -self.k2[i];
            for j in 0..m {
                a[(m + i, j)] = -self.k0[(i, j)] / qi;
                a[(m + i, m + j)] = -self.k1[(i, j)] / qi;
            }
        }
        a
    }

    /// All eigenvalues of the f64 companion matrix as frequencies ω = i s.
    pub fn companion_frequencies(&self) -> Vec<Complex64> {
        self.companion().complex_eigenvalues().iter().map(|s| Complex64::i() * s).collect()
    }
}

/// Smallest singular value: full SVD for moderate sizes, inverse iteration
/// on MᴴM otherwise.
pub fn smallest_singular_value(m: DMatrix<Complex64>) -> f64 {
    if m.nrows() <= 400 {
        let sv = m.singular_values();
        return sv.iter().cloned().fold(f64::INFINITY, f64::min);
    }
    let n = m.nrows();
    let lu = m.clone().lu();
    let mh = m.adjoint().lu();
    let mut x = DVector::from_fn(n, |i, _| Complex64::new(1.0 + (i as f64 * 0.37).sin(), 0.0));
    x /= Complex64::from(x.norm());
    let mut est = 0.0;
    for _ in 0..100 {
        let Some(y) = mh.solve(&x) else { return 0.0 };
        let Some(z) = lu.solve(&y) else { return 0.0 };
        let nz = z.norm();
        let new = 1.0 / nz.sqrt();
        x = z / Complex64::from(nz);
        if (new - est).abs() <= 1e-12 * new {
            return new;
        }
        est = new;
    }
    est
}

pub fn semiclassical_map(z: Complex64, h: f64) -> Complex64 {
    z / h
}

pub fn semiclassical_inverse(omega: Complex64, h: f64) -> Complex64 {
    omega * h
}

/// Rectangle in the ω plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Window {
    pub fn contains(&self, w: Complex64) -> bool {
        w.re >= self.re_min && w.re <= self.re_max && w.im >= self.im_min && w.im <= self.im_max
    }
    fn grown(&self, by: f64) -> Window {
        Window {
            re_min: self.re_min - by,
            re_max: self.re_max + by,
            im_min: self.im_min - by,
            im_max: self.im_max + by,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resonance {
    pub omega: Complex64,
    /// σ_min(P(ω)) relative to the matrix scale, in f64.
    pub residual: f64,
    /// Relative change under N → 2N.
    pub drift: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceSet {
    pub n: usize,
    pub scheme: Scheme,
    /// Ordered by decay rate −Im ω, then by Re ω.
    pub items: Vec<Resonance>,
}

impl ResonanceSet {
    pub fn converged(&self) -> impl Iterator<Item = &Resonance> {
        self.items.iter().filter(|r| r.converged)
    }
}

fn order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    (-a.im).partial_cmp(&-b.im).unwrap().then(a.re.partial_cmp(&b.re).unwrap())
}

/// Seeds from the f64 companion matrix of a small collocation pencil.
pub fn seeds(coeffs: &PencilCoefficients, n: usize, window: &Window) -> Result<Vec<Complex64>, SpectraError> {
    let p = discretize(coeffs, n.clamp(8, SEED_N), Scheme::Collocation)?;
    let grown = window.grown(0.05 * (1.0 + window.im_max.abs().max(window.im_min.abs())));
    let mut s: Vec<Complex64> =
        p.companion_frequencies().into_iter().filter(|w| w.is_finite() && grown.contains(*w)).collect();
    s.sort_by(order);
    Ok(s)
}

fn dedupe(mut v: Vec<Complex64>) -> Vec<Complex64> {
    v.sort_by(order);
    let mut out: Vec<Complex64> = Vec::new();
    for w in v {
        if !out.iter().any(|u| (u - w).norm() <= 1e-9 * w.norm().max(1e-3)) {
            out.push(w);
        }
    }
    out
}

/// Mirror partner −ω̄ of a frequency.
pub fn mirror(w: Complex64) -> Complex64 {
    Complex64::new(-w.re, w.im)
}

/// Refine seeds on `pencil`; drops seeds that do not settle. Only seeds with
/// Re ω ≥ 0 are refined, the others are recovered from the symmetry ω ↔ −ω̄.
pub fn refine_all(pencil: &OperatorPencil, seeds: &[Complex64]) -> Vec<Complex64> {
    let half: Vec<Complex64> = dedupe(seeds.iter().map(|w| if w.re < 0.0 { mirror(*w) } else { *w }).collect());
    let found: Vec<Complex64> = half
        .par_iter()
        .filter_map(|&w| {
            let reach = 0.2 * w.norm().max(0.05);
            pencil.refine(w, reach, 12).map(|r| r.omega)
        })
        .collect();
    with_mirrors(found)
}

fn with_mirrors(v: Vec<Complex64>) -> Vec<Complex64> {
    let mut all = Vec::with_capacity(2 * v.len());
    for w in v {
        if w.re.abs() <= 1e-12 * w.norm().max(1e-3) {
            all.push(Complex64::new(0.0, w.im));
        } else {
            all.push(w);
            all.push(mirror(w));
        }
    }
    dedupe(all)
}

/// Resonances in `window` with residuals and N → 2N convergence flags.
pub fn resonances(pencil: &OperatorPencil, window: &Window) -> Result<ResonanceSet, SpectraError> {
    let seeds = seeds(&pencil.coeffs, pencil.n, window)?;
    let at_n: Vec<Complex64> =
        refine_all(pencil, &seeds).into_iter().filter(|w| window.contains(*w) && w.re >= 0.0).collect();
    let fine = discretize(&pencil.coeffs, 2 * pencil.n, pencil.scheme())?;
    let half: Vec<Resonance> = at_n
        .par_iter()
        .map(|&w| {
            let scale = w.norm().max(1e-3);
            let drift = fine.refine(w, 1e-2 * scale, 12).map(|r| (r.omega - w).norm() / scale).unwrap_or(f64::INFINITY);
            Resonance { omega: w, residual: pencil.relative_residual(w), drift, converged: drift < CONVERGENCE_TOL }
        })
        .collect();
    let mut items = Vec::new();
    for r in half {
        if r.omega.re > 1e-12 * r.omega.norm().max(1e-3) {
            let m = Resonance { omega: mirror(r.omega), ..r.clone() };
            if window.contains(m.omega) {
                items.push(m);
            }
        }
        items.push(r);
    }
    items.sort_by(|a, b| order(&a.omega, &b.omega));
    Ok(ResonanceSet { n: pencil.n, scheme: pencil.scheme(), items })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, build_slice, reduce};

    fn pencil(n: usize, scheme: Scheme) -> OperatorPencil {
        let m = build_model(1.0, 0.03, 0.1, 2).unwrap();
        discretize(&reduce(&build_slice(&m).unwrap()), n, scheme).unwrap()
    }

    #[test]
    fn constants_map_to_potential() {
        for scheme in [Scheme::Collocation, Scheme::FiniteDifference4] {
            let m = build_model(1.0, 0.03, 0.1, 0).unwrap();
            let p = discretize(&reduce(&build_slice(&m).unwrap()), 32, scheme).unwrap();
            let one = DVector::from_element(p.len(), 1.0);
            let r = &p.k0 * one;
            assert!(r.iter().all(|v| (v - 0.1).abs() < 1e-10), "{scheme:?}");
        }
    }

    #[test]
    fn fundamental_mode_refines() {
        let p = pencil(32, Scheme::Collocation);
        let w = refine_all(&p, &[Complex64::new(0.437, -0.077)]);
        assert_eq!(w.len(), 2);
        let target = Complex64::new(0.4371069070, -0.0768539501);
        assert!(w.iter().any(|v| (v - target).norm() < 1e-9));
        assert!(w.iter().any(|v| (v - mirror(target)).norm() < 1e-9));
    }

    #[test]
    fn too_small_grid_rejected() {
        let m = build_model(1.0, 0.03, 0.1, 2).unwrap();
        assert_eq!(
            discretize(&reduce(&build_slice(&m).unwrap()), 4, Scheme::Collocation).err(),
            Some(SpectraError::Size(4))
        );
    }
}

//! Double-double copy of the pencil and Newton refinement of its eigenvalues.
//!
//! Collocation pencils are badly conditioned at large N: eigenvalues of the
//! f64 companion matrix lose accuracy roughly like cond·ε. Refining each
//! eigenvalue on P(ω)u = 0 with ~32 significant digits recovers the exact
//! discrete eigenvalue.

use super::grid::{ddiv, drecip, DdMatrix, Grid};
use crate::model::PencilCoefficients;
use num_complex::{Complex, Complex64};
use twofloat::TwoFloat;

pub type Cdd = Complex<TwoFloat>;

fn dd(v: f64) -> TwoFloat {
    TwoFloat::from(v)
}

fn cdd(z: Complex64) -> Cdd {
    Complex::new(dd(z.re), dd(z.im))
}

/// Complex quotient built on [`ddiv`].
fn cdiv(a: Cdd, b: Cdd) -> Cdd {
    let den = b.re * b.re + b.im * b.im;
    Complex::new(ddiv(a.re * b.re + a.im * b.im, den), ddiv(a.im * b.re - a.re * b.im, den))
}

fn to_c64(z: Cdd) -> Complex64 {
    Complex64::new(f64::from(z.re), f64::from(z.im))
}

/// Root of (Λ/3)r³ − r + 2M polished in double-double from an f64 guess.
fn polish_root(mass: f64, lambda: f64, r0: f64) -> TwoFloat {
    let m = dd(mass);
    let l3 = dd(lambda) / 3.0;
    let mut r = dd(r0);
    for _ in 0..4 {
        let p = l3 * r * r * r - r + 2.0 * m;
        let dp = 3.0 * l3 * r * r - 1.0;
        r -= ddiv(p, dp);
    }
    r
}

/// K0, K1 and the diagonal of K2 in double-double, with d/dr̃ = J⁻¹ d/dx.
#[derive(Debug, Clone)]
pub struct DdPencil {
    pub k0: DdMatrix,
    pub k1: DdMatrix,
    pub k2: Vec<TwoFloat>,
}

impl DdPencil {
    pub fn build(coeffs: &PencilCoefficients, grid: &Grid) -> DdPencil {
        let s = &coeffs.slice;
        let m = &s.model;
        let (r_lo, r_hi) = if m.is_ball() {
            (dd(0.0), polish_root(0.0, m.lambda, s.r_hi))
        } else {
            (polish_root(m.mass, m.lambda, s.r_lo), polish_root(m.mass, m.lambda, s.r_hi))
        };
        let jac = r_hi - r_lo;
        let lam = dd(m.lambda);
        let mass = dd(m.mass);
        let ang = dd(m.angular());
        let v0 = dd(m.v0);
        let n = grid.len();
        let mut a2 = Vec::with_capacity(n);
        let mut a1 = Vec::with_capacity(n);
        let mut a0 = Vec::with_capacity(n);
        let mut b1 = Vec::with_capacity(n);
        let mut b0 = Vec::with_capacity(n);
        let mut c0 = Vec::with_capacity(n);
        for &xf in &grid.x {
            let x = dd(xf);
            let rt = r_lo + jac * x;
            let inv_rt = drecip(rt);
            let inv_j = drecip(jac);
            let f = 1.0 - 2.0 * mass * inv_rt - lam * rt * rt / 3.0;
            let df = 2.0 * mass * inv_rt * inv_rt - 2.0 * lam * rt / 3.0;
            let (h, dh, q) = if m.is_ball() {
                (x, inv_j, dd(1.0))
            } else {
                let c = ddiv(dd(12.0), lam * jac * jac);
                (2.0 * x - 1.0, 2.0 * inv_j, ddiv(c * rt, rt + r_lo + r_hi))
            };
            a2.push(-f * inv_j * inv_j);
            a1.push(-(df + 2.0 * f * inv_rt) * inv_j);
            a0.push(ang * inv_rt * inv_rt + v0);
            b1.push(2.0 * h * inv_j);
            b0.push(dh + 2.0 * h * inv_rt);
            c0.push(-q);
        }
        let mut k0 = DdMatrix::zeros(n);
        let mut k1 = DdMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                k0.set(i, j, a2[i] * grid.d2.get(i, j) + a1[i] * grid.d1.get(i, j));
                k1.set(i, j, b1[i] * grid.d1.get(i, j));
            }
            k0.set(i, i, k0.get(i, i) + a0[i]);
            k1.set(i, i, k1.get(i, i) + b0[i]);
        }
        DdPencil { k0, k1, k2: c0 }
    }

    pub fn n(&self) -> usize {
        self.k2.len()
    }

    /// [[0, I], [−Q⁻¹K0, −Q⁻¹K1]] with Q = −K2, acting on (u, −iωu).
    pub fn companion(&self) -> DdMatrix {
        let n = self.n();
        let mut a = DdMatrix::zeros(2 * n);
        for i in 0..n {
            a.set(i, n + i, dd(1.0));
            let q = -self.k2[i];
            for j in 0..n {
                a.set(n + i, j, -ddiv(self.k0.get(i, j), q));
                a.set(n + i, n + j, -ddiv(self.k1.get(i, j), q));
            }
        }
        a
    }

    /// P(ω) = K0 − iωK1 + ω²K2, row-major.
    fn eval(&self, w: Cdd) -> Vec<Cdd> {
        let n = self.n();
        let miw = Complex::new(w.im, -w.re);
        let w2 = w * w;
        let mut a = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut v = miw * self.k1.get(i, j);
                v.re += self.k0.get(i, j);
                if i == j {
                    v += w2 * self.k2[i];
                }
                a.push(v);
            }
        }
        a
    }

    /// P′(ω) x = (−iK1 + 2ωK2) x.
    fn deriv_apply(&self, w: Cdd, x: &[Cdd]) -> Vec<Cdd> {
        let n = self.n();
        let two_w = w * dd(2.0);
        (0..n)
            .map(|i| {
                let mut s = Complex::new(dd(0.0), dd(0.0));
                for j in 0..n {
                    s += x[j] * self.k1.get(i, j);
                }
                // −i s
                let t = Complex::new(s.im, -s.re);
                t + two_w * self.k2[i] * x[i]
            })
            .collect()
    }
}

/// In-place LU with partial pivoting; returns the permutation.
struct Lu {
    n: usize,
    a: Vec<Cdd>,
    perm: Vec<usize>,
}

fn mag(z: &Cdd) -> f64 {
    z.re.hi().abs() + z.im.hi().abs()
}

impl Lu {
    fn factor(mut a: Vec<Cdd>, n: usize) -> Option<Lu> {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, best) =
                (k..n).map(|i| (i, mag(&a[i * n + k]))).fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if best == 0.0 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = a[k * n + k];
            let inv = cdiv(Complex::new(dd(1.0), dd(0.0)), piv);
            let (top, bottom) = a.split_at_mut((k + 1) * n);
            let row_k = &top[k * n..];
            for i in 0..(n - k - 1) {
                let row = &mut bottom[i * n..(i + 1) * n];
                let l = row[k] * inv;
                row[k] = l;
                for j in k + 1..n {
                    row[j] -= l * row_k[j];
                }
            }
        }
        Some(Lu { n, a, perm })
    }

    fn solve(&self, b: &[Cdd]) -> Vec<Cdd> {
        let n = self.n;
        let mut y: Vec<Cdd> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.a[i * n + j] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.a[i * n + j] * y[j];
            }
            y[i] = cdiv(s, self.a[i * n + i]);
        }
        y
    }
}

/// Outcome of a Newton refinement.
#[derive(Debug, Clone)]
pub struct Refined {
    pub omega: Complex64,
    pub mode: Vec<Complex64>,
    pub iterations: usize,
}

/// Fixed probe vectors; any generic choice works.
fn probe(n: usize, salt: u64) -> Vec<Cdd> {
    let mut s = 0x9E37_79B9_7F4A_7C15u64 ^ salt;
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((s >> 11) as f64) / ((1u64 << 53) as f64);
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((s >> 11) as f64) / ((1u64 << 53) as f64);
            Complex::new(dd(0.5 + a), dd(b - 0.5))
        })
        .collect()
}

/// Newton iteration on 1/(cᵀP(ω)⁻¹b). Returns None if it does not settle
/// within `max_iter` steps or wanders further than `max_move` from the start.
pub fn refine(p: &DdPencil, omega0: Complex64, max_move: f64, max_iter: usize) -> Option<Refined> {
    newton(p.n(), &|w| p.eval(w), &|w, x| p.deriv_apply(w, x), omega0, max_move, max_iter)
}

/// The same iteration for the standard problem A x = s x with A real.
pub fn refine_standard(a: &DdMatrix, s0: Complex64, max_move: f64, max_iter: usize) -> Option<Refined> {
    let n = a.n;
    let eval = |s: Cdd| {
        let mut m: Vec<Cdd> = a.data.iter().map(|v| Complex::new(*v, dd(0.0))).collect();
        for i in 0..n {
            m[i * n + i] -= s;
        }
        m
    };
    let deriv = |_: Cdd, x: &[Cdd]| x.iter().map(|z| -*z).collect();
    newton(n, &eval, &deriv, s0, max_move, max_iter)
}

type Eval<'a> = &'a dyn Fn(Cdd) -> Vec<Cdd>;
type Deriv<'a> = &'a dyn Fn(Cdd, &[Cdd]) -> Vec<Cdd>;

fn newton(n: usize, eval: Eval, deriv: Deriv, omega0: Complex64, max_move: f64, max_iter: usize) -> Option<Refined> {
    let b = probe(n, 1);
    let c = probe(n, 2);
    let start = omega0;
    let mut w = cdd(omega0);
    let scale = omega0.norm().max(1e-3);
    let mut prev = f64::INFINITY;
    for it in 0..max_iter {
        let Some(lu) = Lu::factor(eval(w), n) else {
            // exactly singular: w is an eigenvalue
            return Some(Refined { omega: to_c64(w), mode: vec![], iterations: it });
        };
        let x = lu.solve(&b);
        let y = lu.solve(&deriv(w, &x));
        let cx: Cdd = c.iter().zip(&x).fold(Complex::new(dd(0.0), dd(0.0)), |s, (a, b)| s + *a * *b);
        let cy: Cdd = c.iter().zip(&y).fold(Complex::new(dd(0.0), dd(0.0)), |s, (a, b)| s + *a * *b);
        let step = cdiv(cx, cy);
        let st = to_c64(step).norm();
        if !st.is_finite() {
            return None;
        }
        w -= step;
        if (to_c64(w) - start).norm() > max_move {
            return None;
        }
        // quadratic convergence until the step reaches the conditioning floor
        let done = st <= 1e-22 * scale || (st <= 1e-9 * scale && st > 0.25 * prev);
        if done {
            let norm = x.iter().map(mag).fold(0.0, f64::max);
            let mode = x.iter().map(|z| to_c64(*z) / norm).collect();
            return Some(Refined { omega: to_c64(w), mode, iterations: it + 1 });
        }
        prev = st;
    }
    None
}

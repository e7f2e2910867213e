//! Nodes, differentiation matrices and quadrature on the chart x ∈ [0, 1].
//!
//! Matrices are assembled in double-double arithmetic from the (exact) f64
//! node values and rounded afterwards, so the f64 and extended copies describe
//! the same discretization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Chebyshev–Gauss–Lobatto collocation.
    Collocation,
    /// Fourth-order finite differences on a uniform grid.
    FiniteDifference4,
}

/// Double-double quotient by long division. `TwoFloat`'s own dd/dd division
/// forms its correction term without an FMA and is only f64-accurate.
pub fn ddiv(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    TwoFloat::new_add(q1, q2) + q3
}

pub fn drecip(b: TwoFloat) -> TwoFloat {
    ddiv(TwoFloat::from(1.0), b)
}

/// Row-major square matrix in double-double.
#[derive(Debug, Clone)]
pub struct DdMatrix {
    pub n: usize,
    pub data: Vec<TwoFloat>,
}

impl DdMatrix {
    pub fn zeros(n: usize) -> Self {
        DdMatrix { n, data: vec![TwoFloat::from(0.0); n * n] }
    }
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> TwoFloat {
        self.data[i * self.n + j]
    }
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: TwoFloat) {
        self.data[i * self.n + j] = v;
    }
    pub fn mul(&self, other: &DdMatrix) -> DdMatrix {
        let n = self.n;
        let mut out = DdMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == TwoFloat::from(0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }
    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| f64::from(self.get(i, j)))
    }
}

/// Discretization of [0, 1] (or of the parity-folded half of [−1, 1]).
#[derive(Debug, Clone)]
pub struct Grid {
    pub scheme: Scheme,
    /// Nodes in increasing order.
    pub x: Vec<f64>,
    pub d1: DdMatrix,
    pub d2: DdMatrix,
    /// Quadrature weights for ∫₀¹ g dx.
    pub quad: Vec<f64>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.x.len()
    }
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// N + 1 nodes on the closed interval [0, 1].
    pub fn interval(scheme: Scheme, n: usize) -> Grid {
        let (x, quad) = match scheme {
            Scheme::Collocation => {
                let y = cheb_points(n);
                let x: Vec<f64> = y.iter().map(|&t| 0.5 * (1.0 - t)).collect();
                let w = clenshaw_curtis(n).into_iter().map(|w| 0.5 * w).collect();
                (x, w)
            }
            Scheme::FiniteDifference4 => {
                let x: Vec<f64> = (0..=n).map(|j| j as f64 / n as f64).collect();
                (x, gregory(n, 1.0 / n as f64))
            }
        };
        let (d1, d2) = match scheme {
            Scheme::Collocation => {
                let (d1, d2) = barycentric_diff(&x, 4.0);
                (d1, d2)
            }
            Scheme::FiniteDifference4 => fd4_matrices(n, TwoFloat::from(n as f64)),
        };
        Grid { scheme, x, d1, d2, quad }
    }

    /// Grid for the ball: nodes of a symmetric grid on [−1, 1] with an odd
    /// number of intervals (no node at 0), restricted to x > 0 and folded for
    /// functions of parity `sign` (+1 even, −1 odd). N + 1 nodes are kept.
    pub fn folded(scheme: Scheme, n: usize, sign: f64) -> Grid {
        let m = 2 * n + 1;
        let (y, w, d1, d2) = match scheme {
            Scheme::Collocation => {
                let y: Vec<f64> = cheb_points(m).into_iter().rev().collect();
                let (d1, d2) = barycentric_diff(&y, 2.0);
                (y, clenshaw_curtis(m), d1, d2)
            }
            Scheme::FiniteDifference4 => {
                let h = 2.0 / m as f64;
                let mut y: Vec<f64> = (0..=m).map(|j| -1.0 + j as f64 * h).collect();
                for j in 0..=n {
                    y[m - j] = -y[j];
                }
                let (d1, d2) = fd4_matrices(m, TwoFloat::from(m as f64) / 2.0);
                (y, gregory(m, h), d1, d2)
            }
        };
        // positive half is indices n+1..=m, mirror of j is m − j
        let pos: Vec<usize> = (n + 1..=m).collect();
        let s = TwoFloat::from(sign);
        let fold = |d: &DdMatrix| {
            let k = pos.len();
            let mut out = DdMatrix::zeros(k);
            for (a, &i) in pos.iter().enumerate() {
                for (b, &j) in pos.iter().enumerate() {
                    out.set(a, b, d.get(i, j) + s * d.get(i, m - j));
                }
            }
            out
        };
        Grid {
            scheme,
            x: pos.iter().map(|&i| y[i]).collect(),
            d1: fold(&d1),
            d2: fold(&d2),
            quad: pos.iter().map(|&i| w[i]).collect(),
        }
    }
}

/// Chebyshev extreme points cos(πj/n), exactly antisymmetric.
pub fn cheb_points(n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n + 1];
    for j in 0..=n / 2 {
        // sin form is more accurate near the ends
        let v = (std::f64::consts::PI * (n as f64 - 2.0 * j as f64) / (2.0 * n as f64)).sin();
        y[j] = v;
        y[n - j] = -v;
    }
    if n.is_multiple_of(2) {
        y[n / 2] = 0.0;
    }
    y
}

/// Clenshaw–Curtis weights on [−1, 1] for the points cos(πj/n).
pub fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    let nf = n as f64;
    let pi = std::f64::consts::PI;
    for (j, wj) in w.iter_mut().enumerate() {
        let theta = pi * j as f64 / nf;
        let mut s = 1.0;
        let kmax = n / 2;
        for k in 1..=kmax {
            let b = if 2 * k == n { 1.0 } else { 2.0 };
            s -= b * (2.0 * k as f64 * theta).cos() / (4.0 * (k * k) as f64 - 1.0);
        }
        let c = if j == 0 || j == n { 1.0 } else { 2.0 };
        *wj = c * s / nf;
    }
    w
}

/// Gregory end-corrected trapezoid weights, fourth order, for n intervals of width h.
pub fn gregory(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 6);
    let mut w = vec![h; n + 1];
    let ends = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    for (k, &c) in ends.iter().enumerate() {
        w[k] = c * h;
        w[n - k] = c * h;
    }
    w
}

/// First and second polynomial differentiation matrices on arbitrary distinct
/// nodes. `scale` should be about 4/(interval length) to keep the barycentric
/// weights in range.
pub fn barycentric_diff(x: &[f64], scale: f64) -> (DdMatrix, DdMatrix) {
    let n = x.len();
    let xs: Vec<TwoFloat> = x.iter().map(|&v| TwoFloat::from(v)).collect();
    let sc = TwoFloat::from(scale);
    let mut w = vec![TwoFloat::from(1.0); n];
    for j in 0..n {
        let mut p = TwoFloat::from(1.0);
        for k in 0..n {
            if k != j {
                p *= sc * (xs[j] - xs[k]);
            }
        }
        w[j] = drecip(p);
    }
    let mut d1 = DdMatrix::zeros(n);
    for i in 0..n {
        let mut diag = TwoFloat::from(0.0);
        for j in 0..n {
            if i != j {
                let v = ddiv(ddiv(w[j], w[i]), xs[i] - xs[j]);
                d1.set(i, j, v);
                diag -= v;
            }
        }
        d1.set(i, i, diag);
    }
    let mut d2 = DdMatrix::zeros(n);
    for i in 0..n {
        let mut diag = TwoFloat::from(0.0);
        for j in 0..n {
            if i != j {
                let v = 2.0 * d1.get(i, j) * (d1.get(i, i) - drecip(xs[i] - xs[j]));
                d2.set(i, j, v);
                diag -= v;
            }
        }
        d2.set(i, i, diag);
    }
    (d1, d2)
}

/// First and second derivative matrices, fourth order, on n intervals of a
/// uniform grid with 1/h = inv_h.
fn fd4_matrices(n: usize, inv_h: TwoFloat) -> (DdMatrix, DdMatrix) {
    let m = n + 1;
    let mut d1 = DdMatrix::zeros(m);
    let mut d2 = DdMatrix::zeros(m);
    let c1 = inv_h / 12.0;
    let c2 = inv_h * inv_h / 12.0;
    let first_left: [[f64; 5]; 2] = [[-25.0, 48.0, -36.0, 16.0, -3.0], [-3.0, -10.0, 18.0, -6.0, 1.0]];
    let second_left: [[f64; 6]; 2] = [[45.0, -154.0, 214.0, -156.0, 61.0, -10.0], [10.0, -15.0, -4.0, 14.0, -6.0, 1.0]];
    for (r, row) in first_left.iter().enumerate() {
        for (k, &c) in row.iter().enumerate() {
            d1.set(r, k, c1 * c);
            d1.set(m - 1 - r, m - 1 - k, -(c1 * c));
        }
    }
    for (r, row) in second_left.iter().enumerate() {
        for (k, &c) in row.iter().enumerate() {
            d2.set(r, k, c2 * c);
            d2.set(m - 1 - r, m - 1 - k, c2 * c);
        }
    }
    let cen1 = [1.0, -8.0, 0.0, 8.0, -1.0];
    let cen2 = [-1.0, 16.0, -30.0, 16.0, -1.0];
    for i in 2..m - 2 {
        for k in 0..5 {
            d1.set(i, i + k - 2, c1 * cen1[k]);
            d2.set(i, i + k - 2, c2 * cen2[k]);
        }
    }
    (d1, d2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(d: &DdMatrix, v: &[f64]) -> Vec<f64> {
        let m = d.to_f64();
        (0..v.len()).map(|i| (0..v.len()).map(|j| m[(i, j)] * v[j]).sum()).collect()
    }

    #[test]
    fn collocation_differentiates_polynomials_exactly() {
        let g = Grid::interval(Scheme::Collocation, 24);
        let p: Vec<f64> = g.x.iter().map(|&x| x.powi(7) - 3.0 * x * x + 1.0).collect();
        let dp = apply(&g.d1, &p);
        for (i, &x) in g.x.iter().enumerate() {
            assert!((dp[i] - (7.0 * x.powi(6) - 6.0 * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn fd4_exact_on_quartics() {
        let g = Grid::interval(Scheme::FiniteDifference4, 20);
        let p: Vec<f64> = g.x.iter().map(|&x| x.powi(4) - x).collect();
        let dp = apply(&g.d1, &p);
        let ddp = apply(&g.d2, &p);
        for (i, &x) in g.x.iter().enumerate() {
            assert!((dp[i] - (4.0 * x.powi(3) - 1.0)).abs() < 1e-11);
            assert!((ddp[i] - 12.0 * x * x).abs() < 1e-9);
        }
    }

    #[test]
    fn quadratures_integrate_polynomials() {
        for scheme in [Scheme::Collocation, Scheme::FiniteDifference4] {
            let g = Grid::interval(scheme, 40);
            let s: f64 = g.x.iter().zip(&g.quad).map(|(x, w)| w * x.powi(3)).sum();
            assert!((s - 0.25).abs() < 1e-12, "{scheme:?} {s}");
        }
    }

    #[test]
    fn folded_grid_integrates_even_functions() {
        for scheme in [Scheme::Collocation, Scheme::FiniteDifference4] {
            let g = Grid::folded(scheme, 30, 1.0);
            assert!(g.x.iter().all(|&x| x > 0.0));
            let s: f64 = g.x.iter().zip(&g.quad).map(|(x, w)| w * x * x).sum();
            assert!((s - 1.0 / 3.0).abs() < 1e-9, "{scheme:?} {s}");
            // odd parity: derivative of x³ from half-grid values
            let go = Grid::folded(scheme, 30, -1.0);
            let p: Vec<f64> = go.x.iter().map(|x| x.powi(3)).collect();
            let dp = apply(&go.d1, &p);
            for (i, x) in go.x.iter().enumerate() {
                assert!((dp[i] - 3.0 * x * x).abs() < 1e-9);
            }
        }
    }
}

//! Exact solver for constant-coefficient separable operators
//! `alpha I + nu (Tx (x) I + I (x) Ty) / h^2` via 1D eigenbases.
//!
//! `T` is the three-point `-d^2` stencil with one of three wall closures.
//! The eigenvectors are the classical sine/cosine families; both dense
//! transforms are plain matrix products.

use nalgebra::DMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) enum Closure {
    /// Unknowns strictly between two wall nodes that hold zero.
    Node,
    /// Cell-centered unknowns with ghost reflection `g = -inside`.
    CellDirichlet,
    /// Cell-centered unknowns with zero wall flux.
    CellNeumann,
}

#[derive(Clone, Debug)]
struct Basis {
    q: DMatrix<f64>,
    qt: DMatrix<f64>,
    lambda: Vec<f64>,
}

impl Basis {
    fn new(n: usize, closure: Closure) -> Self {
        use std::f64::consts::PI;
        let mut q = DMatrix::<f64>::zeros(n, n);
        let mut lambda = Vec::with_capacity(n);
        for k in 0..n {
            let (theta, vec): (f64, Box<dyn Fn(usize) -> f64>) = match closure {
                Closure::Node => {
                    let t = (k + 1) as f64 * PI / (n + 1) as f64;
                    (t, Box::new(move |j| (t * (j + 1) as f64).sin()))
                }
                Closure::CellDirichlet => {
                    let t = (k + 1) as f64 * PI / n as f64;
                    (t, Box::new(move |j| (t * (j as f64 + 0.5)).sin()))
                }
                Closure::CellNeumann => {
                    let t = k as f64 * PI / n as f64;
                    (t, Box::new(move |j| (t * (j as f64 + 0.5)).cos()))
                }
            };
            lambda.push(2.0 - 2.0 * theta.cos());
            let norm = (0..n).map(|j| vec(j).powi(2)).sum::<f64>().sqrt();
            for j in 0..n {
                q[(j, k)] = vec(j) / norm;
            }
        }
        if closure == Closure::CellNeumann {
            lambda[0] = 0.0;
        }
        let qt = q.transpose();
        Self { q, qt, lambda }
    }
}

/// Separable operator on an `n_rows x n_cols` block (rows = y, cols = x).
#[derive(Clone, Debug)]
pub(crate) struct Separable {
    bx: Basis,
    by: Basis,
    inv_h2: f64,
}

impl Separable {
    pub(crate) fn new(ncols: usize, cx: Closure, nrows: usize, cy: Closure, h: f64) -> Self {
        Self {
            bx: Basis::new(ncols, cx),
            by: Basis::new(nrows, cy),
            inv_h2: 1.0 / (h * h),
        }
    }

    pub(crate) fn ncols(&self) -> usize {
        self.bx.lambda.len()
    }

    pub(crate) fn nrows(&self) -> usize {
        self.by.lambda.len()
    }

    /// Solves `(alpha I + nu T / h^2) x = rhs` for row-major `rhs`.
    /// A zero eigenvalue (pure Neumann, `alpha = 0`) gets a zero
    /// coefficient, which returns the mean-free solution.
    pub(crate) fn solve(&self, rhs: &[f64], alpha: f64, nu: f64) -> Vec<f64> {
        let (nr, nc) = (self.nrows(), self.ncols());
        debug_assert_eq!(rhs.len(), nr * nc);
        let f = DMatrix::from_row_slice(nr, nc, rhs);
        let mut hat = &self.by.qt * f * &self.bx.q;
        for c in 0..nc {
            for r in 0..nr {
                let d = alpha + nu * (self.by.lambda[r] + self.bx.lambda[c]) * self.inv_h2;
                hat[(r, c)] = if d.abs() > 0.0 { hat[(r, c)] / d } else { 0.0 };
            }
        }
        let x = &self.by.q * hat * &self.bx.qt;
        let mut out = Vec::with_capacity(nr * nc);
        for r in 0..nr {
            for c in 0..nc {
                out.push(x[(r, c)]);
            }
        }
        out
    }

    /// Applies `(alpha I + nu T / h^2)` directly with the stencil.
    #[cfg(test)]
    pub(crate) fn apply(&self, x: &[f64], alpha: f64, nu: f64, cx: Closure, cy: Closure) -> Vec<f64> {
        let (nr, nc) = (self.nrows(), self.ncols());
        let mut out = vec![0.0; nr * nc];
        let end = |c: Closure| match c {
            Closure::Node => 2.0,
            Closure::CellDirichlet => 3.0,
            Closure::CellNeumann => 1.0,
        };
        for r in 0..nr {
            for c in 0..nc {
                let v = x[r * nc + c];
                let mut t = 0.0;
                // x direction
                let dx = if c == 0 || c == nc - 1 { end(cx) } else { 2.0 };
                t += dx * v;
                if c > 0 {
                    t -= x[r * nc + c - 1];
                }
                if c + 1 < nc {
                    t -= x[r * nc + c + 1];
                }
                let dy = if r == 0 || r == nr - 1 { end(cy) } else { 2.0 };
                t += dy * v;
                if r > 0 {
                    t -= x[(r - 1) * nc + c];
                }
                if r + 1 < nr {
                    t -= x[(r + 1) * nc + c];
                }
                out[r * nc + c] = alpha * v + nu * t * self.inv_h2;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(cx: Closure, cy: Closure, alpha: f64) {
        let (nc, nr) = (9, 7);
        let s = Separable::new(nc, cx, nr, cy, 0.1);
        let mut x: Vec<f64> = (0..nr * nc).map(|k| ((k * 37 % 11) as f64) - 5.0).collect();
        if alpha == 0.0 && cx == Closure::CellNeumann && cy == Closure::CellNeumann {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            x.iter_mut().for_each(|v| *v -= m);
        }
        let b = s.apply(&x, alpha, 0.7, cx, cy);
        let y = s.solve(&b, alpha, 0.7);
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{cx:?} {cy:?} {err}");
    }

    #[test]
    fn inverse_matches_stencil() {
        use Closure::*;
        for cx in [Node, CellDirichlet, CellNeumann] {
            for cy in [Node, CellDirichlet, CellNeumann] {
                check(cx, cy, 0.0);
                check(cx, cy, 3.0);
            }
        }
    }
}

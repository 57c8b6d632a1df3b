//! Dirichlet and Neumann Poisson solvers on cell-centered data.
//!
//! Both use preconditioned conjugate gradients. The default preconditioner
//! is the exact separable inverse of the constant-coefficient stencil, so
//! a solve normally finishes in one or two iterations; the unpreconditioned
//! path is kept for cross-checking.

use crate::error::{Error, Result};
use crate::fastdiag::{Closure, Separable};
use crate::grid::{laplacian, laplacian_neumann, GridSpec, ScalarField};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct EllipticSolveResult {
    pub solution: ScalarField,
    pub iterations: usize,
    /// Discrete L2 norm of the final residual.
    pub residual_norm: f64,
    /// Compatibility defect removed from Neumann data (`int g - oint flux`);
    /// zero for Dirichlet solves.
    pub projection: f64,
}

/// Outward normal derivative on each wall, one value per wall face.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFlux {
    pub west: Vec<f64>,
    pub east: Vec<f64>,
    pub south: Vec<f64>,
    pub north: Vec<f64>,
}

impl BoundaryFlux {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            west: vec![0.0; grid.ny],
            east: vec![0.0; grid.ny],
            south: vec![0.0; grid.nx],
            north: vec![0.0; grid.nx],
        }
    }

    /// `oint flux ds` with midpoint quadrature.
    pub fn integral(&self, h: f64) -> f64 {
        (self.west.iter().sum::<f64>()
            + self.east.iter().sum::<f64>()
            + self.south.iter().sum::<f64>()
            + self.north.iter().sum::<f64>())
            * h
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    FastDiagonal,
}

/// Poisson solver bound to one grid.
#[derive(Clone, Debug)]
pub struct PoissonSolver {
    grid: GridSpec,
    dirichlet: Separable,
    neumann: Separable,
    pub preconditioner: Preconditioner,
    pub max_iter: usize,
}

impl PoissonSolver {
    pub fn new(grid: GridSpec) -> Self {
        let h = grid.h;
        Self {
            grid,
            dirichlet: Separable::new(grid.nx, Closure::CellDirichlet, grid.ny, Closure::CellDirichlet, h),
            neumann: Separable::new(grid.nx, Closure::CellNeumann, grid.ny, Closure::CellNeumann, h),
            preconditioner: Preconditioner::FastDiagonal,
            max_iter: 20 * grid.nx.max(grid.ny),
        }
    }

    pub fn with_preconditioner(mut self, p: Preconditioner) -> Self {
        self.preconditioner = p;
        self
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Solves `-lap f = g` with `f = 0` on the walls.
    pub fn dirichlet(&self, g: &ScalarField, tol: f64) -> Result<EllipticSolveResult> {
        check_tol(tol)?;
        self.grid.check_same(&g.grid)?;
        let apply = |x: &[f64]| -> Vec<f64> {
            let f = ScalarField { grid: self.grid, data: x.to_vec() };
            laplacian(&f).data.iter().map(|v| -v).collect()
        };
        let precond = |r: &[f64]| -> Vec<f64> {
            match self.preconditioner {
                Preconditioner::None => r.to_vec(),
                Preconditioner::FastDiagonal => self.dirichlet.solve(r, 0.0, 1.0),
            }
        };
        let (x, iterations, residual_norm) =
            pcg(apply, precond, &g.data, tol, self.max_iter, self.grid.h, false, "dirichlet poisson")?;
        Ok(EllipticSolveResult {
            solution: ScalarField { grid: self.grid, data: x },
            iterations,
            residual_norm,
            projection: 0.0,
        })
    }

    /// Solves `lap f = g` with outward normal derivative `flux`, returning
    /// the zero-mean representative. Incompatible data are projected onto
    /// the solvable subspace and the removed defect is reported.
    pub fn neumann(&self, g: &ScalarField, flux: &BoundaryFlux, tol: f64) -> Result<EllipticSolveResult> {
        check_tol(tol)?;
        self.grid.check_same(&g.grid)?;
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        if flux.west.len() != ny || flux.east.len() != ny || flux.south.len() != nx || flux.north.len() != nx {
            return Err(Error::GridMismatch("boundary flux length does not match grid".into()));
        }
        let h = self.grid.h;
        let mut b = g.clone();
        for j in 0..ny {
            b.data[j * nx] -= flux.west[j] / h;
            b.data[j * nx + nx - 1] -= flux.east[j] / h;
        }
        for i in 0..nx {
            b.data[i] -= flux.south[i] / h;
            b.data[(ny - 1) * nx + i] -= flux.north[i] / h;
        }
        let projection = b.data.iter().sum::<f64>() * self.grid.cell_area();
        b.remove_mean();
        let rhs: Vec<f64> = b.data.iter().map(|v| -v).collect();
        let apply = |x: &[f64]| -> Vec<f64> {
            let f = ScalarField { grid: self.grid, data: x.to_vec() };
            laplacian_neumann(&f).data.iter().map(|v| -v).collect()
        };
        let precond = |r: &[f64]| -> Vec<f64> {
            match self.preconditioner {
                Preconditioner::None => r.to_vec(),
                Preconditioner::FastDiagonal => self.neumann.solve(r, 0.0, 1.0),
            }
        };
        let (x, iterations, residual_norm) =
            pcg(apply, precond, &rhs, tol, self.max_iter, h, true, "neumann poisson")?;
        let mut solution = ScalarField { grid: self.grid, data: x };
        solution.remove_mean();
        Ok(EllipticSolveResult {
            solution,
            iterations,
            residual_norm,
            projection,
        })
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("tolerance must be positive, got {tol}")))
    }
}

fn project_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Preconditioned CG from a zero initial guess. Residuals are measured in
/// the h-weighted L2 norm. With `mean_free` every iterate and residual is
/// kept orthogonal to constants.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    h: f64,
    mean_free: bool,
    name: &'static str,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = b.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt() * h;
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if mean_free {
        project_mean(&mut r);
    }
    let mut res = norm(&r);
    if res <= tol {
        return Ok((x, 0, res));
    }
    let mut z = precond(&r);
    if mean_free {
        project_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let a = rz / pap;
        for k in 0..n {
            x[k] += a * p[k];
            r[k] -= a * ap[k];
        }
        if mean_free {
            project_mean(&mut r);
        }
        res = norm(&r);
        if res <= tol {
            if mean_free {
                project_mean(&mut x);
            }
            return Ok((x, it, res));
        }
        z = precond(&r);
        if mean_free {
            project_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::NonConvergence {
        solver: name,
        iterations: max_iter,
        residual: res,
        tolerance: tol,
    })
}

/// Solves `-lap f = g`, `f = 0` on the walls.
pub fn poisson_dirichlet(g: &ScalarField, tol: f64) -> Result<EllipticSolveResult> {
    PoissonSolver::new(g.grid).dirichlet(g, tol)
}

/// Solves `lap f = g` with outward normal derivative `flux`.
pub fn poisson_neumann(g: &ScalarField, flux: &BoundaryFlux, tol: f64) -> Result<EllipticSolveResult> {
    PoissonSolver::new(g.grid).neumann(g, flux, tol)
}

/// Discrete `H^2` norm of a Dirichlet solution: `L2`, gradient and full
/// Hessian parts, all from cell-centered differences.
pub fn h2_norm(f: &ScalarField) -> f64 {
    use crate::grid::{cell_gradient, cell_second_derivatives};
    let (fx, fy) = cell_gradient(f);
    let (fxx, fyy) = cell_second_derivatives(f);
    let (fxy, _) = cell_gradient(&fy);
    let s = f.dot(f) + fx.dot(&fx) + fy.dot(&fy) + fxx.dot(&fxx) + fyy.dot(&fyy) + 2.0 * fxy.dot(&fxy);
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_rhs_gives_zero() {
        let g = GridSpec::unit(16).unwrap();
        let r = poisson_dirichlet(&ScalarField::zeros(g), 1e-10).unwrap();
        assert_eq!(r.solution.max_abs(), 0.0);
        assert_eq!(r.iterations, 0);
        let r = poisson_neumann(&ScalarField::zeros(g), &BoundaryFlux::zeros(g), 1e-10).unwrap();
        assert_eq!(r.solution.max_abs(), 0.0);
    }

    fn mms_error(n: usize, pre: Preconditioner) -> f64 {
        let g = GridSpec::unit(n).unwrap();
        let rhs = ScalarField::from_fn(g, |x, y| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin());
        let exact = ScalarField::from_fn(g, |x, y| (PI * x).sin() * (PI * y).sin());
        let r = PoissonSolver::new(g).with_preconditioner(pre).dirichlet(&rhs, 1e-10).unwrap();
        r.solution.sub(&exact).max_abs()
    }

    #[test]
    fn manufactured_second_order() {
        let e1 = mms_error(32, Preconditioner::FastDiagonal);
        let e2 = mms_error(64, Preconditioner::FastDiagonal);
        assert!((e1 / e2).log2() >= 1.9, "{e1} {e2}");
        let e3 = mms_error(32, Preconditioner::None);
        assert!((e1 - e3).abs() < 1e-8);
    }

    #[test]
    fn residual_below_tolerance_for_random_rhs() {
        let g = GridSpec::unit(24).unwrap();
        let rhs = ScalarField::from_fn(g, |x, y| ((13.0 * x + 7.0 * y).sin() * 1e3).fract());
        for pre in [Preconditioner::FastDiagonal, Preconditioner::None] {
            let r = PoissonSolver::new(g).with_preconditioner(pre).dirichlet(&rhs, 1e-9).unwrap();
            let mut res = laplacian(&r.solution);
            res.axpy(1.0, &rhs);
            assert!(res.l2() <= 1e-9 * 1.0001, "{}", res.l2());
            assert!(r.residual_norm <= 1e-9);
        }
    }

    #[test]
    fn maximum_principle() {
        let g = GridSpec::unit(16).unwrap();
        let rhs = ScalarField::from_fn(g, |x, y| if x < 0.3 && y > 0.6 { 5.0 } else { 0.0 });
        let r = poisson_dirichlet(&rhs, 1e-12).unwrap();
        assert!(r.solution.data.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn neumann_projection_reports_defect() {
        let g = GridSpec::unit(16).unwrap();
        let rhs = ScalarField::constant(g, 0.75);
        let r = poisson_neumann(&rhs, &BoundaryFlux::zeros(g), 1e-10).unwrap();
        assert!((r.projection - 0.75).abs() < 1e-12);
        assert!(r.solution.max_abs() < 1e-10);
    }

    #[test]
    fn neumann_manufactured() {
        // f = cos(pi x) cos(pi y): zero flux, lap f = -2 pi^2 f
        let g = GridSpec::unit(32).unwrap();
        let exact = ScalarField::from_fn(g, |x, y| (PI * x).cos() * (PI * y).cos());
        let rhs = exact.scaled(-2.0 * PI * PI);
        let r = poisson_neumann(&rhs, &BoundaryFlux::zeros(g), 1e-10).unwrap();
        assert!(r.solution.sub(&exact).max_abs() < 5e-3);
        assert!(r.residual_norm <= 1e-10);
    }

    #[test]
    fn solve_is_linear() {
        let g = GridSpec::unit(16).unwrap();
        let a = ScalarField::from_fn(g, |x, y| x * y);
        let b = ScalarField::from_fn(g, |x, y| (3.0 * x).cos() + y);
        let mut ab = a.scaled(2.0);
        ab.axpy(-3.0, &b);
        let sa = poisson_dirichlet(&a, 1e-12).unwrap().solution;
        let sb = poisson_dirichlet(&b, 1e-12).unwrap().solution;
        let sab = poisson_dirichlet(&ab, 1e-12).unwrap().solution;
        let mut comb = sa.scaled(2.0);
        comb.axpy(-3.0, &sb);
        assert!(sab.sub(&comb).max_abs() < 1e-10);
    }
}

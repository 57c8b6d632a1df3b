//! Stationary and unsteady Stokes solves on the MAC grid.
//!
//! The velocity block `alpha I - nu lap` is inverted exactly by separable
//! transforms on the interior faces, and the pressure is found by conjugate
//! gradients on the Schur complement `-div A^-1 grad`. The Schur iteration
//! is preconditioned with `nu I + alpha (-lap_N)^-1`, which is spectrally
//! equivalent uniformly in `alpha` and `h`.

use crate::elliptic::pcg;
use crate::error::{Error, Result};
use crate::fastdiag::{Closure, Separable};
use crate::grid::{
    cell_gradient, cell_to_nodes, divergence, gradient, laplacian_vec, perp_gradient, GridSpec,
    ScalarField, VelocityField,
};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct StokesSolveResult {
    pub velocity: VelocityField,
    /// Zero-mean pressure.
    pub pressure: ScalarField,
    /// Schur-complement iterations.
    pub iterations: usize,
    pub div_residual: f64,
    pub mom_residual: f64,
}

/// Per-grid Stokes solver. Holds only the transform bases, so one instance
/// serves every `(alpha, nu)` pair on its grid.
#[derive(Clone, Debug)]
pub struct StokesSolver {
    grid: GridSpec,
    sx: Separable,
    sy: Separable,
    sp: Separable,
    pub max_iter: usize,
}

impl StokesSolver {
    pub fn new(grid: GridSpec) -> Self {
        let (nx, ny, h) = (grid.nx, grid.ny, grid.h);
        Self {
            grid,
            sx: Separable::new(nx - 1, Closure::Node, ny, Closure::CellDirichlet, h),
            sy: Separable::new(nx, Closure::CellDirichlet, ny - 1, Closure::Node, h),
            sp: Separable::new(nx, Closure::CellNeumann, ny, Closure::CellNeumann, h),
            max_iter: 20 * nx.max(ny),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Exact `(alpha I - nu lap)^-1 f` on interior faces; walls are zero.
    fn velocity_inverse(&self, f: &VelocityField, alpha: f64, nu: f64) -> VelocityField {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut bx = Vec::with_capacity((nx - 1) * ny);
        for j in 0..ny {
            for i in 1..nx {
                bx.push(f.ux_at(i, j));
            }
        }
        let mut by = Vec::with_capacity(nx * (ny - 1));
        for j in 1..ny {
            for i in 0..nx {
                by.push(f.uy_at(i, j));
            }
        }
        let xx = self.sx.solve(&bx, alpha, nu);
        let xy = self.sy.solve(&by, alpha, nu);
        let mut u = VelocityField::zeros(self.grid);
        for j in 0..ny {
            for i in 1..nx {
                let k = u.ix(i, j);
                u.ux[k] = xx[j * (nx - 1) + i - 1];
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let k = u.iy(i, j);
                u.uy[k] = xy[(j - 1) * nx + i];
            }
        }
        u
    }

    fn schur_apply(&self, p: &[f64], alpha: f64, nu: f64) -> Vec<f64> {
        let pf = ScalarField { grid: self.grid, data: p.to_vec() };
        let u = self.velocity_inverse(&gradient(&pf), alpha, nu);
        divergence(&u).data.iter().map(|v| -v).collect()
    }

    /// Solves `alpha u - nu lap u + grad p = f`, `div u = 0`, `u = 0` on the
    /// walls. `guess` warm-starts the pressure.
    pub fn solve(
        &self,
        f: &VelocityField,
        alpha: f64,
        nu: f64,
        tol: f64,
        guess: Option<&ScalarField>,
    ) -> Result<StokesSolveResult> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
        }
        if !(nu > 0.0 && alpha >= 0.0) {
            return Err(Error::Domain(format!("need nu > 0 and alpha >= 0, got nu = {nu}, alpha = {alpha}")));
        }
        self.grid.check_same(&f.grid)?;
        let u0 = self.velocity_inverse(f, alpha, nu);
        let mut rhs: Vec<f64> = divergence(&u0).data.iter().map(|v| -v).collect();
        let mut p0 = vec![0.0; self.grid.cell_count()];
        if let Some(g) = guess {
            self.grid.check_same(&g.grid)?;
            p0.clone_from(&g.data);
            let sp0 = self.schur_apply(&p0, alpha, nu);
            rhs.iter_mut().zip(&sp0).for_each(|(r, s)| *r -= s);
        }
        let precond = |r: &[f64]| -> Vec<f64> {
            let mut z: Vec<f64> = r.iter().map(|v| nu * v).collect();
            if alpha > 0.0 {
                let m = r.iter().sum::<f64>() / r.len() as f64;
                let rr: Vec<f64> = r.iter().map(|v| v - m).collect();
                let y = self.sp.solve(&rr, 0.0, 1.0);
                z.iter_mut().zip(&y).for_each(|(a, b)| *a += alpha * b);
            }
            z
        };
        let (dp, iterations, _) = pcg(
            |p| self.schur_apply(p, alpha, nu),
            precond,
            &rhs,
            tol,
            self.max_iter,
            self.grid.h,
            true,
            "stokes",
        )?;
        let mut pressure = ScalarField { grid: self.grid, data: p0 };
        pressure.data.iter_mut().zip(&dp).for_each(|(a, b)| *a += b);
        pressure.remove_mean();
        let mut forcing = f.clone();
        forcing.axpy(-1.0, &gradient(&pressure));
        let velocity = self.velocity_inverse(&forcing, alpha, nu);
        let div_residual = divergence(&velocity).l2();
        let mom_residual = momentum_residual(&velocity, &pressure, f, alpha, nu);
        Ok(StokesSolveResult {
            velocity,
            pressure,
            iterations,
            div_residual,
            mom_residual,
        })
    }

    /// Stationary Stokes `-nu lap u + grad p = f`.
    pub fn stationary(&self, f: &VelocityField, nu: f64, tol: f64) -> Result<StokesSolveResult> {
        self.solve(f, 0.0, nu, tol, None)
    }

    /// `scale * A^-1 grad_perp(w)` with `A` the unit-viscosity Stokes
    /// operator. The face forcing is the discrete divergence of the
    /// rotation tensor `[[0, w], [-w, 0]]`, so only values of `w` enter.
    pub fn a_inv_perp(&self, w: &ScalarField, scale: f64, tol: f64, guess: Option<&ScalarField>) -> Result<StokesSolveResult> {
        let f = perp_gradient(w);
        let mut r = self.solve(&f, 0.0, 1.0, tol, guess)?;
        if scale != 1.0 {
            r.velocity = r.velocity.scaled(scale);
            r.pressure = r.pressure.scaled(scale);
        }
        Ok(r)
    }

    /// One implicit Euler step of `u_t - visc lap u + grad p = f`.
    pub fn unsteady_step(
        &self,
        u: &VelocityField,
        f: &VelocityField,
        dt: f64,
        visc: f64,
        tol: f64,
        guess: Option<&ScalarField>,
    ) -> Result<StokesSolveResult> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        self.grid.check_same(&u.grid)?;
        let alpha = 1.0 / dt;
        let mut rhs = f.clone();
        rhs.axpy(alpha, u);
        self.solve(&rhs, alpha, visc, tol, guess)
    }

    /// Discrete Leray projection: zero normal wall flux, then subtract the
    /// gradient that removes the divergence. Exact up to round-off.
    pub fn leray_project(&self, u: &VelocityField) -> VelocityField {
        let mut v = u.clone();
        v.enforce_no_slip();
        let d = divergence(&v);
        let m = d.mean();
        let rr: Vec<f64> = d.data.iter().map(|x| x - m).collect();
        let phi = ScalarField { grid: self.grid, data: self.sp.solve(&rr, 0.0, 1.0) };
        // -lap_N phi = div v, so v + grad phi is divergence-free
        v.axpy(1.0, &gradient(&phi));
        v
    }
}

/// `alpha u - nu lap u + grad p - f` on interior faces, discrete L2 norm.
pub fn momentum_residual(u: &VelocityField, p: &ScalarField, f: &VelocityField, alpha: f64, nu: f64) -> f64 {
    let mut r = laplacian_vec(u).scaled(-nu);
    r.axpy(alpha, u);
    r.axpy(1.0, &gradient(p));
    r.axpy(-1.0, f);
    r.enforce_no_slip();
    r.l2()
}

/// Stationary Stokes with unit viscosity on the grid of `f`.
pub fn stokes_stationary(f: &VelocityField, tol: f64) -> Result<StokesSolveResult> {
    StokesSolver::new(f.grid).stationary(f, 1.0, tol)
}

/// `scale * A^-1 grad_perp(w)`.
pub fn apply_a_inv_perp(w: &ScalarField, scale: f64, tol: f64) -> Result<StokesSolveResult> {
    StokesSolver::new(w.grid).a_inv_perp(w, scale, tol, None)
}

/// One implicit Euler step of unsteady Stokes.
pub fn stokes_unsteady_step(
    u: &VelocityField,
    f: &VelocityField,
    dt: f64,
    visc: f64,
    tol: f64,
) -> Result<StokesSolveResult> {
    if !(visc > 0.0) {
        return Err(Error::Domain(format!("viscosity must be positive, got {visc}")));
    }
    StokesSolver::new(u.grid).unsteady_step(u, f, dt, visc, tol, None)
}

/// Cell-centered 2x2 tensor field.
#[derive(Clone, Debug)]
pub struct TensorField {
    pub f11: ScalarField,
    pub f12: ScalarField,
    pub f21: ScalarField,
    pub f22: ScalarField,
}

impl TensorField {
    /// `s * [[0, w], [-w, 0]]`.
    pub fn rotation(w: &ScalarField, s: f64) -> Self {
        Self {
            f11: ScalarField::zeros(w.grid),
            f12: w.scaled(s),
            f21: w.scaled(-s),
            f22: ScalarField::zeros(w.grid),
        }
    }

    pub fn max_abs(&self) -> f64 {
        [&self.f11, &self.f12, &self.f21, &self.f22]
            .iter()
            .map(|f| f.max_abs())
            .fold(0.0, f64::max)
    }

    /// Discrete `L^q` norm of the full gradient (Frobenius magnitude per cell).
    pub fn gradient_lq(&self, q: f64) -> f64 {
        let g = self.f11.grid;
        let mut mag2 = vec![0.0; g.cell_count()];
        for f in [&self.f11, &self.f12, &self.f21, &self.f22] {
            let (dx, dy) = cell_gradient(f);
            for ((m, a), b) in mag2.iter_mut().zip(&dx.data).zip(&dy.data) {
                *m += a * a + b * b;
            }
        }
        let s: f64 = mag2.iter().map(|m| m.sqrt().powf(q)).sum::<f64>() * g.cell_area();
        s.powf(1.0 / q)
    }

    /// Face values of `div F`: diagonal entries are differenced between
    /// cells, off-diagonal entries through their node interpolants.
    pub fn divergence(&self) -> VelocityField {
        let g = self.f11.grid;
        let (nx, ny) = (g.nx, g.ny);
        let s = nx + 1;
        let inv_h = 1.0 / g.h;
        let n12 = cell_to_nodes(&self.f12);
        let n21 = cell_to_nodes(&self.f21);
        let mut out = VelocityField::zeros(g);
        for j in 0..ny {
            for i in 1..nx {
                let k = out.ix(i, j);
                out.ux[k] = (self.f11.at(i, j) - self.f11.at(i - 1, j)) * inv_h
                    + (n12[(j + 1) * s + i] - n12[j * s + i]) * inv_h;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let k = out.iy(i, j);
                out.uy[k] = (n21[j * s + i + 1] - n21[j * s + i]) * inv_h
                    + (self.f22.at(i, j) - self.f22.at(i, j - 1)) * inv_h;
            }
        }
        out
    }
}

/// Largest discrete velocity-gradient entry, wall ghosts included.
pub fn velocity_gradient_max(u: &VelocityField) -> f64 {
    let g = u.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut m: f64 = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            m = m.max((u.ux_at(i + 1, j) - u.ux_at(i, j)).abs());
            m = m.max((u.uy_at(i, j + 1) - u.uy_at(i, j)).abs());
        }
    }
    for i in 1..nx {
        for j in 0..ny - 1 {
            m = m.max((u.ux_at(i, j + 1) - u.ux_at(i, j)).abs());
        }
        m = m.max(2.0 * u.ux_at(i, 0).abs()).max(2.0 * u.ux_at(i, ny - 1).abs());
    }
    for j in 1..ny {
        for i in 0..nx - 1 {
            m = m.max((u.uy_at(i + 1, j) - u.uy_at(i, j)).abs());
        }
        m = m.max(2.0 * u.uy_at(0, j).abs()).max(2.0 * u.uy_at(nx - 1, j).abs());
    }
    m / g.h
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogGradientAudit {
    /// `||grad u||_inf` of the Stokes solution.
    pub grad_u_inf: f64,
    pub f_inf: f64,
    pub grad_f_lq: f64,
    /// `(1 + ||F||_inf) ln(e + ||grad F||_q)`.
    pub bound_shape: f64,
    /// `grad_u_inf / bound_shape`; constants are fitted from these.
    pub ratio: f64,
}

/// Solves `-lap u + grad p = div F` and compares `||grad u||_inf` with the
/// logarithmic bound shape.
pub fn log_gradient_audit(f: &TensorField, q: f64, tol: f64) -> Result<LogGradientAudit> {
    if !(q > 2.0) {
        return Err(Error::Domain(format!("log-gradient audit needs q > 2, got {q}")));
    }
    let r = stokes_stationary(&f.divergence(), tol)?;
    let grad_u_inf = velocity_gradient_max(&r.velocity);
    let f_inf = f.max_abs();
    let grad_f_lq = f.gradient_lq(q);
    let bound_shape = (1.0 + f_inf) * (std::f64::consts::E + grad_f_lq).ln();
    Ok(LogGradientAudit {
        grad_u_inf,
        f_inf,
        grad_f_lq,
        bound_shape,
        ratio: grad_u_inf / bound_shape,
    })
}

/// Ratio `||u||_2 / ||H||_2` for forcing in double-divergence form
/// `f = lap H` with `H` vanishing on the walls.
pub fn divergence_form_audit(h: &VelocityField, tol: f64) -> Result<f64> {
    let mut hh = h.clone();
    hh.enforce_no_slip();
    let norm = hh.l2();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let r = stokes_stationary(&laplacian_vec(&hh), tol)?;
    Ok(r.velocity.l2() / norm)
}

//! Constructive existence machinery: mollified Picard iteration of the
//! linearized map `v -> u` (transport of `w` by `v`, then Navier-Stokes
//! linearized around `v`), and a two-trajectory stability probe.

use std::thread;

use crate::analysis::{sobolev_seminorm, velocity_seminorm};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VelocityField};
use crate::micropolar::{advect_w, momentum_forcing, FluidParams, Integrator, SimState};
use crate::stokes::StokesSolver;

/// Truncated, renormalized discrete Gaussian of standard deviation `epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct MollifierSpec {
    pub epsilon: f64,
    /// One-dimensional weights for offsets `-r..=r`.
    weights: Vec<f64>,
}

impl MollifierSpec {
    pub fn new(epsilon: f64, h: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) || !(h > 0.0) {
            return Err(Error::Domain(format!("invalid mollifier width {epsilon} on spacing {h}")));
        }
        if epsilon < h {
            return Ok(Self { epsilon, weights: vec![1.0] });
        }
        let r = (4.0 * epsilon / h).floor() as i64;
        let raw: Vec<f64> = (-r..=r)
            .map(|k| {
                let x = k as f64 * h / epsilon;
                (-0.5 * x * x).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            epsilon,
            weights: raw.iter().map(|w| w / total).collect(),
        })
    }

    /// True when `epsilon < h` and mollification is the identity.
    pub fn is_identity(&self) -> bool {
        self.weights.len() == 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn radius(&self) -> usize {
        self.weights.len() / 2
    }
}

#[derive(Clone, Copy)]
enum Fold {
    /// Mirror about the cell edge, `f(-1) = f(0)`.
    EvenEdge,
    /// Antisymmetric mirror about the cell edge, `f(-1) = -f(0)`.
    OddEdge,
    /// Antisymmetric mirror about the first sample, `f(-k) = -f(k)`.
    OddNode,
}

fn fold(m: i64, n: i64, mode: Fold) -> (usize, f64) {
    let (mut m, mut sign) = (m, 1.0);
    loop {
        if m >= 0 && m < n {
            return (m as usize, sign);
        }
        match mode {
            Fold::EvenEdge | Fold::OddEdge => {
                m = if m < 0 { -1 - m } else { 2 * n - 1 - m };
                if matches!(mode, Fold::OddEdge) {
                    sign = -sign;
                }
            }
            Fold::OddNode => {
                m = if m < 0 { -m } else { 2 * (n - 1) - m };
                sign = -sign;
            }
        }
    }
}

/// Convolves a row-major `ncols x nrows` array along one axis.
fn convolve(data: &[f64], ncols: usize, nrows: usize, along_x: bool, w: &[f64], mode: Fold) -> Vec<f64> {
    let r = (w.len() / 2) as i64;
    let mut out = vec![0.0; data.len()];
    for j in 0..nrows {
        for i in 0..ncols {
            let mut s = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let off = k as i64 - r;
                let (ii, jj, sign) = if along_x {
                    let (m, sg) = fold(i as i64 + off, ncols as i64, mode);
                    (m, j, sg)
                } else {
                    let (m, sg) = fold(j as i64 + off, nrows as i64, mode);
                    (i, m, sg)
                };
                s += wk * sign * data[jj * ncols + ii];
            }
            out[j * ncols + i] = s;
        }
    }
    out
}

/// Separable Gaussian smoothing of a cell field with even reflection at the
/// walls; the discrete mean is preserved.
pub fn mollify(f: &ScalarField, spec: &MollifierSpec) -> ScalarField {
    if spec.is_identity() {
        return f.clone();
    }
    let g = f.grid;
    let a = convolve(&f.data, g.nx, g.ny, true, &spec.weights, Fold::EvenEdge);
    let b = convolve(&a, g.nx, g.ny, false, &spec.weights, Fold::EvenEdge);
    ScalarField { grid: g, data: b }
}

/// Velocity smoothing with odd reflection (no-slip images), followed by the
/// Leray projection so the result stays solenoidal with zero wall flux.
pub fn mollify_velocity(u: &VelocityField, spec: &MollifierSpec, solver: &StokesSolver) -> VelocityField {
    if spec.is_identity() {
        return u.clone();
    }
    let g = u.grid;
    let w = &spec.weights;
    let ux = convolve(&u.ux, g.nx + 1, g.ny, true, w, Fold::OddNode);
    let ux = convolve(&ux, g.nx + 1, g.ny, false, w, Fold::OddEdge);
    let uy = convolve(&u.uy, g.nx, g.ny + 1, true, w, Fold::OddEdge);
    let uy = convolve(&uy, g.nx, g.ny + 1, false, w, Fold::OddNode);
    solver.leray_project(&VelocityField { grid: g, ux, uy, no_slip: true })
}

/// Uniform partition of `[0, t_final]` with steps no larger than `dt_max`.
pub fn uniform_steps(t_final: f64, dt_max: f64) -> Vec<f64> {
    if !(t_final > 0.0) {
        return Vec::new();
    }
    let n = (t_final / dt_max - 1e-9).ceil().max(1.0) as usize;
    vec![t_final / n as f64; n]
}

/// `w_t + v.grad w + 4 kappa w = 2 kappa curl v` with `v` frozen on each step;
/// the same update as the coupled solver's transport. Returns `w` at every
/// time level (`dts.len() + 1` fields).
pub fn solve_transport_linearized(
    w0: &ScalarField,
    v_eps: &[VelocityField],
    params: FluidParams,
    dts: &[f64],
) -> Result<Vec<ScalarField>> {
    check_levels(v_eps.len(), dts.len())?;
    let mut out = Vec::with_capacity(dts.len() + 1);
    out.push(w0.clone());
    for (v, &dt) in v_eps.iter().zip(dts) {
        let next = advect_w(out.last().unwrap_or(w0), v, params, dt)?;
        out.push(next);
    }
    Ok(out)
}

/// `u_t + v.grad u - (nu + kappa) lap u + grad p = -2 kappa grad_perp w` with
/// advection explicit and viscosity implicit on each step.
pub fn solve_ns_linearized(
    solver: &StokesSolver,
    u0: &VelocityField,
    v_eps: &[VelocityField],
    w_eps: &[ScalarField],
    params: FluidParams,
    dts: &[f64],
    tol: f64,
) -> Result<Vec<VelocityField>> {
    check_levels(v_eps.len(), dts.len())?;
    check_levels(w_eps.len(), dts.len())?;
    let mut out = Vec::with_capacity(dts.len() + 1);
    let mut u = u0.clone();
    u.enforce_no_slip();
    out.push(u);
    for k in 0..dts.len() {
        let cur = &out[k];
        let f = momentum_forcing(cur, &v_eps[k], Some(&w_eps[k]), params.kappa);
        let next = solver.unsteady_step(cur, &f, dts[k], params.viscosity(), tol, None)?.velocity;
        out.push(next);
    }
    Ok(out)
}

fn check_levels(have: usize, steps: usize) -> Result<()> {
    if have < steps {
        Err(Error::GridMismatch(format!("{have} time levels supplied for {steps} steps")))
    } else {
        Ok(())
    }
}

/// Smallness condition `|u0|^2 + C T (|w0|^2 + R0) <= R0` with `C` fitted
/// from the first iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct R0Check {
    pub r0: f64,
    pub c_fit: f64,
    pub lhs: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// `sup_t ||u^{k+1}(t) - u^k(t)||` per iteration.
    pub distances: Vec<f64>,
    pub converged: bool,
    pub r0_check: R0Check,
}

impl FixedPointReport {
    /// Successive distance ratios.
    pub fn ratios(&self) -> Vec<f64> {
        self.distances.windows(2).map(|d| d[1] / d[0]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointConfig {
    pub t_final: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Inner Stokes tolerance.
    pub solver_tol: f64,
}

impl FixedPointConfig {
    /// `dt = h/2`, `epsilon = h`, Picard tolerance `1e-8`, at most 20 iterations.
    pub fn for_grid(grid: GridSpec, t_final: f64) -> Self {
        Self {
            t_final,
            dt: 0.5 * grid.h,
            epsilon: grid.h,
            tol: 1e-8,
            max_iter: 20,
            solver_tol: 1e-12,
        }
    }
}

/// A trajectory on a fixed time partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub u: Vec<VelocityField>,
    pub w: Vec<ScalarField>,
}

impl Trajectory {
    /// `sup_t sqrt(||u - u'||^2 + ||w - w'||^2)` over common time levels.
    pub fn sup_distance(&self, u: &[VelocityField], w: &[ScalarField]) -> f64 {
        let mut d = 0.0f64;
        for k in 0..self.u.len().min(u.len()).min(w.len()) {
            let du = self.u[k].sub(&u[k]);
            let dw = self.w[k].sub(&w[k]);
            d = d.max((du.dot(&du) + dw.dot(&dw)).sqrt());
        }
        d
    }
}

fn sup_velocity_distance(a: &[VelocityField], b: &[VelocityField]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.sub(y).l2()).fold(0.0, f64::max)
}

/// Picard iteration `v -> F(v)`, starting from `guess` (defaults to `u0`
/// frozen in time). Non-convergence is reported, not raised.
pub fn fixed_point_solve(
    u0: &VelocityField,
    w0: &ScalarField,
    params: FluidParams,
    cfg: FixedPointConfig,
    guess: Option<&[VelocityField]>,
) -> Result<(Trajectory, FixedPointReport)> {
    let grid = u0.grid;
    grid.check_same(&w0.grid)?;
    let solver = StokesSolver::new(grid);
    let spec = MollifierSpec::new(cfg.epsilon, grid.h)?;
    let dts = uniform_steps(cfg.t_final, cfg.dt);
    let mut times = vec![0.0];
    for dt in &dts {
        times.push(times.last().copied().unwrap_or(0.0) + dt);
    }
    let mut u0c = u0.clone();
    u0c.enforce_no_slip();
    let mut v: Vec<VelocityField> = match guess {
        Some(g) => {
            check_levels(g.len(), dts.len() + 1)?;
            g.to_vec()
        }
        None => vec![u0c.clone(); dts.len() + 1],
    };

    let e0 = u0c.dot(&u0c) + w0.dot(w0);
    let r0 = 10.0 * e0;
    let mut r0_check = R0Check {
        r0,
        c_fit: 0.0,
        lhs: u0c.dot(&u0c),
        passed: true,
    };
    let mut distances = Vec::new();
    let mut w_traj = vec![w0.clone(); dts.len() + 1];
    let mut converged = false;
    for it in 0..cfg.max_iter.max(1) {
        let v_eps: Vec<VelocityField> = v.iter().map(|x| mollify_velocity(x, &spec, &solver)).collect();
        w_traj = solve_transport_linearized(w0, &v_eps, params, &dts)?;
        let u = solve_ns_linearized(&solver, &u0c, &v_eps, &w_traj, params, &dts, cfg.solver_tol)?;
        if it == 0 {
            r0_check = fit_r0(&u, &w_traj, &times, &v_eps, w0, r0, cfg.t_final);
        }
        let d = sup_velocity_distance(&u, &v);
        distances.push(d);
        v = u;
        if d <= cfg.tol {
            converged = true;
            break;
        }
    }
    let report = FixedPointReport {
        iterations: distances.len(),
        distances,
        converged,
        r0_check,
    };
    Ok((Trajectory { times, u: v, w: w_traj }, report))
}

fn fit_r0(u: &[VelocityField], w: &[ScalarField], times: &[f64], v: &[VelocityField], w0: &ScalarField, r0: f64, t_final: f64) -> R0Check {
    let u0n = u[0].dot(&u[0]);
    let w0n = w0.dot(w0);
    let vmax = v.iter().map(|x| x.dot(x)).fold(0.0, f64::max);
    let mut c = 0.0f64;
    for k in 1..u.len() {
        let grow = u[k].dot(&u[k]) + w[k].dot(&w[k]) - u0n;
        let denom = times[k] * (w0n + vmax);
        if denom > 0.0 {
            c = c.max(grow / denom);
        }
    }
    let lhs = u0n + c * t_final * (w0n + r0);
    R0Check {
        r0,
        c_fit: c,
        lhs,
        passed: lhs <= r0,
    }
}

/// Outcome of perturbing `w0` by `delta` times a fixed unit profile.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub delta: f64,
    pub times: Vec<f64>,
    /// `D(t) = ||U||^2 + ||W||^2` for the difference of the two runs.
    pub d: Vec<f64>,
    /// `int_0^t (1 + ||grad u||^2 + ||grad w||_4^2)` along the base run.
    pub exponent: Vec<f64>,
    pub c_fit: f64,
    pub violations: usize,
}

impl StabilityReport {
    /// `D(T) / D(0)`, or 0 when the perturbation vanishes.
    pub fn growth(&self) -> f64 {
        match (self.d.first(), self.d.last()) {
            (Some(&a), Some(&b)) if a > 0.0 => b / a,
            _ => 0.0,
        }
    }
}

/// Unit-L2 perturbation profile `sin(2 pi x) sin(pi y)`.
pub fn perturbation_profile(grid: GridSpec) -> ScalarField {
    use std::f64::consts::PI;
    let (lx, ly) = (grid.lx, grid.ly);
    let f = ScalarField::from_fn(grid, |x, y| (2.0 * PI * x / lx).sin() * (PI * y / ly).sin());
    let n = f.l2();
    f.scaled(1.0 / n)
}

fn trajectory(it: &Integrator, s0: SimState, dts: &[f64]) -> Result<Vec<SimState>> {
    let mut out = vec![s0];
    for &dt in dts {
        let next = it.step(out.last().unwrap_or_else(|| unreachable!()), dt)?;
        out.push(next);
    }
    Ok(out)
}

/// Runs base and perturbed trajectories concurrently, measures `D(t)` and
/// checks it against `D(0) exp(C I(t))`. `C` is twice the largest observed
/// `ln(D/D0)/I` over the first quarter of the run, then held fixed.
pub fn uniqueness_probe(
    u0: &VelocityField,
    w0: &ScalarField,
    delta: f64,
    params: FluidParams,
    t_final: f64,
    dt: f64,
) -> Result<StabilityReport> {
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("perturbation size must be >= 0, got {delta}")));
    }
    let grid = u0.grid;
    let mut it = Integrator::new(grid, params);
    it.tol = 1e-12;
    let dts = uniform_steps(t_final, dt);
    let base0 = SimState::new(u0.clone(), w0.clone())?;
    let mut wp = w0.clone();
    wp.axpy(delta, &perturbation_profile(grid));
    let pert0 = SimState::new(u0.clone(), wp)?;
    let (a, b) = thread::scope(|s| {
        let h = s.spawn(|| trajectory(&it, pert0, &dts));
        let a = trajectory(&it, base0, &dts);
        (a, h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
    });
    let (a, b) = (a?, b?);

    let mut times = Vec::with_capacity(a.len());
    let mut d = Vec::with_capacity(a.len());
    let mut exponent = Vec::with_capacity(a.len());
    let mut acc = 0.0;
    for k in 0..a.len() {
        let du = a[k].u.sub(&b[k].u);
        let dw = a[k].w.sub(&b[k].w);
        times.push(a[k].t);
        d.push(du.dot(&du) + dw.dot(&dw));
        if k > 0 {
            let s = &a[k - 1];
            let gu = velocity_seminorm(&s.u, 1, 2.0)?;
            let gw = sobolev_seminorm(&s.w, 1, 4.0)?;
            acc += (1.0 + gu * gu + gw * gw) * dts[k - 1];
        }
        exponent.push(acc);
    }

    let d0 = d[0];
    let mut c: f64 = 0.0;
    let window = 0.25 * t_final;
    if d0 > 0.0 {
        for k in 1..d.len() {
            if times[k] <= window + 1e-12 && d[k] > 0.0 {
                c = c.max(2.0 * (d[k] / d0).ln() / exponent[k]);
            }
        }
    }
    let violations = (0..d.len())
        .filter(|&k| d[k] > d0 * (c * exponent[k]).exp() * (1.0 + 1e-9))
        .count();
    Ok(StabilityReport {
        delta,
        times,
        d,
        exponent,
        c_fit: c,
        violations,
    })
}

//! Time integration of the coupled velocity / micro-rotation system.
//!
//! One step advances `u` by an implicit-viscous projection step with the
//! advection and coupling terms frozen at the start of the step, then
//! transports `w` along characteristics of the same start-of-step `u`.

use crate::analysis::{Diagnostics, DiagnosticsConfig, DiagnosticsRecord, LedgerSummary, StepSample};
use crate::elliptic::{BoundaryFlux, PoissonSolver};
use crate::error::{Error, Result};
use crate::grid::{
    convective_term, divergence, gradient, laplacian_vec, perp_divergence, perp_gradient, GridSpec,
    ScalarField, VelocityField,
};
use crate::stokes::{StokesSolveResult, StokesSolver};

pub const DEFAULT_CFL_MAX: f64 = 0.9;
pub const DEFAULT_DT_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidParams {
    pub nu: f64,
    pub kappa: f64,
}

impl FluidParams {
    pub fn new(nu: f64, kappa: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::Domain(format!("nu must be positive, got {nu}")));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::Domain(format!("kappa must be nonnegative, got {kappa}")));
        }
        Ok(Self { nu, kappa })
    }

    /// `nu + kappa`, the effective viscosity of the velocity equation.
    pub fn viscosity(&self) -> f64 {
        self.nu + self.kappa
    }

    /// `2 kappa / (nu + kappa)`.
    pub fn coupling(&self) -> f64 {
        2.0 * self.kappa / self.viscosity()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub step: u64,
    pub u: VelocityField,
    pub w: ScalarField,
}

impl SimState {
    pub fn new(u: VelocityField, w: ScalarField) -> Result<Self> {
        u.grid.check_same(&w.grid)?;
        let mut u = u;
        u.enforce_no_slip();
        Ok(Self { t: 0.0, step: 0, u, w })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            t: 0.0,
            step: 0,
            u: VelocityField::zeros(grid),
            w: ScalarField::zeros(grid),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.w.grid
    }
}

/// Adaptive step selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtPolicy {
    pub cfl_max: f64,
    pub dt_floor: f64,
    pub dt_max: f64,
}

impl Default for DtPolicy {
    fn default() -> Self {
        Self {
            cfl_max: DEFAULT_CFL_MAX,
            dt_floor: DEFAULT_DT_FLOOR,
            dt_max: f64::INFINITY,
        }
    }
}

impl DtPolicy {
    /// Largest admissible step, shrunk so the remaining interval splits into
    /// equal pieces (no sliver step at the end).
    pub fn next_dt(&self, u: &VelocityField, t: f64, t_final: f64) -> Result<f64> {
        let remaining = t_final - t;
        let umax = u.max_abs();
        let mut dt = self.dt_max;
        if umax > 0.0 {
            dt = dt.min(self.cfl_max * u.grid.h / umax);
        }
        if !dt.is_finite() {
            dt = remaining;
        }
        if !(dt >= self.dt_floor) || !u.is_finite() {
            return Err(Error::DtCollapse { t, dt, floor: self.dt_floor });
        }
        let pieces = (remaining / dt - 1e-9).ceil().max(1.0);
        Ok(remaining / pieces)
    }
}

fn cfl_check(u: &VelocityField, dt: f64, cfl_max: f64) -> Result<()> {
    let cfl = dt * u.max_abs() / u.grid.h;
    if cfl > cfl_max * (1.0 + 1e-12) || !cfl.is_finite() {
        return Err(Error::Cfl { cfl, max: cfl_max });
    }
    Ok(())
}

/// Bilinear sample of a face component on its lattice, in cell-index
/// coordinates. Rows or columns beyond the lattice are tangential ghosts
/// `-inside` for no-slip fields and copies otherwise.
struct FaceSampler<'a> {
    data: &'a [f64],
    ncols: usize,
    nrows: usize,
    ghost: f64,
}

impl FaceSampler<'_> {
    fn at(&self, c: isize, r: isize) -> f64 {
        let cc = c.clamp(0, self.ncols as isize - 1);
        let rr = r.clamp(0, self.nrows as isize - 1);
        let v = self.data[rr as usize * self.ncols + cc as usize];
        if cc != c || rr != r {
            self.ghost * v
        } else {
            v
        }
    }

    /// `(a, b)` in lattice units, `a` along columns.
    fn sample(&self, a: f64, b: f64) -> f64 {
        let c0 = a.floor();
        let r0 = b.floor();
        let fa = a - c0;
        let fb = b - r0;
        let (c0, r0) = (c0 as isize, r0 as isize);
        let lo = (1.0 - fa) * self.at(c0, r0) + fa * self.at(c0 + 1, r0);
        let hi = (1.0 - fa) * self.at(c0, r0 + 1) + fa * self.at(c0 + 1, r0 + 1);
        (1.0 - fb) * lo + fb * hi
    }
}

/// Velocity in cells per unit time at a point in cell-index coordinates.
fn velocity_index_units(u: &VelocityField, x: f64, y: f64) -> (f64, f64) {
    let g = u.grid;
    let ghost = if u.no_slip { -1.0 } else { 1.0 };
    let sx = FaceSampler { data: &u.ux, ncols: g.nx + 1, nrows: g.ny, ghost };
    let sy = FaceSampler { data: &u.uy, ncols: g.nx, nrows: g.ny + 1, ghost };
    // ux lives at (i - 1/2, j), uy at (i, j - 1/2)
    let vx = sx.sample(x + 0.5, y);
    let vy = sy.sample(x, y + 0.5);
    (vx / g.h, vy / g.h)
}

/// Cubic Lagrange weights for nodes `-1, 0, 1, 2` at offset `f` in `[0, 1]`.
/// At `f = 0` they are exactly `(0, 1, 0, 0)`.
fn cubic_weights(f: f64) -> [f64; 4] {
    [
        -f * (1.0 - f) * (2.0 - f) / 6.0,
        (1.0 + f) * (1.0 - f) * (2.0 - f) / 2.0,
        (1.0 + f) * f * (2.0 - f) / 2.0,
        -(1.0 + f) * f * (1.0 - f) / 6.0,
    ]
}

/// Bicubic interpolation of cell data, limited to the range of the four
/// surrounding values. The limiter makes the map monotone (no new extrema),
/// also in floating point.
fn interpolate_cells(w: &ScalarField, x: f64, y: f64) -> f64 {
    let g = w.grid;
    let x = x.clamp(0.0, (g.nx - 1) as f64);
    let y = y.clamp(0.0, (g.ny - 1) as f64);
    let i0 = (x.floor() as usize).min(g.nx - 2);
    let j0 = (y.floor() as usize).min(g.ny - 2);
    let wx = cubic_weights(x - i0 as f64);
    let wy = cubic_weights(y - j0 as f64);
    let at = |i: isize, j: isize| {
        let ii = (i0 as isize + i).clamp(0, g.nx as isize - 1) as usize;
        let jj = (j0 as isize + j).clamp(0, g.ny as isize - 1) as usize;
        w.at(ii, jj)
    };
    let mut v = 0.0;
    for (b, wyb) in wy.iter().enumerate() {
        let mut row = 0.0;
        for (a, wxa) in wx.iter().enumerate() {
            row += wxa * at(a as isize - 1, b as isize - 1);
        }
        v += wyb * row;
    }
    let (a, b, c, d) = (at(0, 0), at(1, 0), at(0, 1), at(1, 1));
    let lo = a.min(b).min(c).min(d);
    let hi = a.max(b).max(c).max(d);
    v.clamp(lo, hi)
}

/// Semi-Lagrangian step of `w_t + b . grad w + 4 kappa w = 2 kappa zeta`
/// with `zeta` frozen. Feet are traced with the midpoint rule and clamped
/// to the closed domain; damping and source are integrated exactly.
pub(crate) fn transport(w: &ScalarField, b: &VelocityField, zeta: &ScalarField, kappa: f64, dt: f64) -> ScalarField {
    let g = w.grid;
    let (xmax, ymax) = (g.nx as f64 - 0.5, g.ny as f64 - 0.5);
    let decay = (-4.0 * kappa * dt).exp();
    let gain = 0.5 * (1.0 - decay);
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (x, y) = (i as f64, j as f64);
            let (u1, v1) = velocity_index_units(b, x, y);
            let xm = (x - 0.5 * dt * u1).clamp(-0.5, xmax);
            let ym = (y - 0.5 * dt * v1).clamp(-0.5, ymax);
            let (u2, v2) = velocity_index_units(b, xm, ym);
            let xf = (x - dt * u2).clamp(-0.5, xmax);
            let yf = (y - dt * v2).clamp(-0.5, ymax);
            let foot = interpolate_cells(w, xf, yf);
            let k = j * g.nx + i;
            out.data[k] = if kappa == 0.0 { foot } else { decay * foot + gain * zeta.data[k] };
        }
    }
    out
}

/// One transport step of `w` by `u` with the `2 kappa curl u` source.
pub fn advect_w(w: &ScalarField, u: &VelocityField, params: FluidParams, dt: f64) -> Result<ScalarField> {
    advect_w_cfl(w, u, params, dt, DEFAULT_CFL_MAX)
}

pub fn advect_w_cfl(w: &ScalarField, u: &VelocityField, params: FluidParams, dt: f64, cfl_max: f64) -> Result<ScalarField> {
    w.grid.check_same(&u.grid)?;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    cfl_check(u, dt, cfl_max)?;
    let zeta = if params.kappa == 0.0 { ScalarField::zeros(w.grid) } else { perp_divergence(u) };
    Ok(transport(w, u, &zeta, params.kappa, dt))
}

/// Explicit part of the momentum forcing: `-(b . grad) u - 2 kappa grad_perp w`.
/// The coupling term is omitted entirely when `kappa = 0`.
pub(crate) fn momentum_forcing(u: &VelocityField, b: &VelocityField, w: Option<&ScalarField>, kappa: f64) -> VelocityField {
    let mut f = convective_term(u, b).scaled(-1.0);
    if let Some(w) = w {
        if kappa != 0.0 {
            f.axpy(-2.0 * kappa, &perp_gradient(w));
        }
    }
    f
}

/// Stepper bound to one grid and parameter set.
#[derive(Clone, Debug)]
pub struct Integrator {
    pub params: FluidParams,
    pub stokes: StokesSolver,
    pub tol: f64,
    pub cfl_max: f64,
}

impl Integrator {
    pub fn new(grid: GridSpec, params: FluidParams) -> Self {
        Self {
            params,
            stokes: StokesSolver::new(grid),
            tol: crate::stokes::DEFAULT_TOL,
            cfl_max: DEFAULT_CFL_MAX,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.stokes.grid()
    }

    /// Velocity update; the full Stokes result keeps the pressure.
    pub fn momentum(&self, state: &SimState, dt: f64) -> Result<StokesSolveResult> {
        cfl_check(&state.u, dt, self.cfl_max)?;
        let f = momentum_forcing(&state.u, &state.u, Some(&state.w), self.params.kappa);
        self.stokes.unsteady_step(&state.u, &f, dt, self.params.viscosity(), self.tol, None)
    }

    pub fn transport(&self, state: &SimState, dt: f64) -> Result<ScalarField> {
        advect_w_cfl(&state.w, &state.u, self.params, dt, self.cfl_max)
    }

    /// Momentum then transport, both with the start-of-step velocity.
    pub fn step(&self, state: &SimState, dt: f64) -> Result<SimState> {
        let u = self.momentum(state, dt)?.velocity;
        let w = self.transport(state, dt)?;
        Ok(SimState {
            t: state.t + dt,
            step: state.step + 1,
            u,
            w,
        })
    }

    /// Navier-Stokes step with viscosity `nu + kappa` and no micro-rotation,
    /// sharing every operation with [`Integrator::momentum`].
    pub fn navier_stokes_step(&self, u: &VelocityField, dt: f64) -> Result<VelocityField> {
        cfl_check(u, dt, self.cfl_max)?;
        let f = momentum_forcing(u, u, None, self.params.kappa);
        Ok(self.stokes.unsteady_step(u, &f, dt, self.params.viscosity(), self.tol, None)?.velocity)
    }
}

pub fn momentum_step(state: &SimState, params: FluidParams, dt: f64, tol: f64) -> Result<VelocityField> {
    let mut it = Integrator::new(state.grid(), params);
    it.tol = tol;
    Ok(it.momentum(state, dt)?.velocity)
}

pub fn step(state: &SimState, params: FluidParams, dt: f64) -> Result<SimState> {
    Integrator::new(state.grid(), params).step(state, dt)
}

/// Run settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunConfig {
    pub t_final: f64,
    pub policy: DtPolicy,
    /// Emit a record every `interval` steps (and always at the last step).
    pub interval: usize,
    /// When set, every step is taken at this Courant number regardless of
    /// the policy, and the CFL guard is raised to match.
    pub forced_cfl: Option<f64>,
    /// Keep every state in [`RunOutcome::states`].
    pub keep_states: bool,
    pub diagnostics: DiagnosticsConfig,
}

impl RunConfig {
    pub fn new(t_final: f64) -> Self {
        Self {
            t_final,
            policy: DtPolicy::default(),
            interval: 1,
            forced_cfl: None,
            keep_states: false,
            diagnostics: DiagnosticsConfig {
                calibration_time: 0.1 * t_final,
                ..DiagnosticsConfig::default()
            },
        }
    }
}

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: SimState,
    pub records: Vec<DiagnosticsRecord>,
    pub summary: LedgerSummary,
    pub samples: Vec<StepSample>,
    /// All states from `t0`, when requested.
    pub states: Vec<SimState>,
}

/// Step-by-step driver; on failure [`Run::state`] is the last good state.
#[derive(Clone, Debug)]
pub struct Run {
    integrator: Integrator,
    diagnostics: Diagnostics,
    state: SimState,
    cfg: RunConfig,
}

impl Run {
    /// Starts a run and returns the record at `t0`.
    pub fn new(state0: SimState, params: FluidParams, cfg: RunConfig) -> Result<(Self, DiagnosticsRecord)> {
        if !(cfg.t_final >= state0.t) || !cfg.t_final.is_finite() {
            return Err(Error::Domain(format!("final time {} precedes start {}", cfg.t_final, state0.t)));
        }
        if cfg.interval == 0 {
            return Err(Error::Domain("diagnostics interval must be positive".into()));
        }
        let mut integrator = Integrator::new(state0.grid(), params);
        integrator.tol = cfg.diagnostics.tol;
        integrator.cfl_max = cfg.forced_cfl.map_or(cfg.policy.cfl_max, |c| c.max(cfg.policy.cfl_max));
        let (diagnostics, rec) = Diagnostics::new(&state0, params, integrator.stokes.clone(), cfg.diagnostics)?;
        Ok((
            Self {
                integrator,
                diagnostics,
                state: state0,
                cfg,
            },
            rec,
        ))
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn summary(&self) -> &LedgerSummary {
        &self.diagnostics.summary
    }

    pub fn done(&self) -> bool {
        self.state.t >= self.cfg.t_final
    }

    fn next_dt(&self) -> Result<f64> {
        let s = &self.state;
        match self.cfg.forced_cfl {
            Some(c) => {
                let umax = s.u.max_abs();
                let remaining = self.cfg.t_final - s.t;
                if umax > 0.0 && umax.is_finite() {
                    Ok((c * s.u.grid.h / umax).min(remaining))
                } else {
                    self.cfg.policy.next_dt(&s.u, s.t, self.cfg.t_final)
                }
            }
            None => self.cfg.policy.next_dt(&s.u, s.t, self.cfg.t_final),
        }
    }

    /// One step; returns a record at interval boundaries and at the end.
    pub fn advance(&mut self) -> Result<Option<DiagnosticsRecord>> {
        let dt = self.next_dt()?;
        let mut next = self.integrator.step(&self.state, dt)?;
        if self.cfg.t_final - next.t < 1e-12 * self.cfg.t_final.max(1.0) {
            next.t = self.cfg.t_final;
        }
        if !next.u.is_finite() || !next.w.is_finite() {
            return Err(Error::DtCollapse {
                t: self.state.t,
                dt,
                floor: self.cfg.policy.dt_floor,
            });
        }
        let rec = self.diagnostics.observe(&next)?;
        self.state = next;
        let emit = self.state.step.is_multiple_of(self.cfg.interval as u64) || self.done();
        Ok(emit.then_some(rec))
    }

    pub fn finish(self) -> RunOutcome {
        RunOutcome {
            state: self.state,
            records: Vec::new(),
            summary: self.diagnostics.summary,
            samples: self.diagnostics.samples,
            states: Vec::new(),
        }
    }
}

/// Integrates to `cfg.t_final`, collecting every emitted record.
pub fn run(state0: SimState, params: FluidParams, cfg: RunConfig) -> Result<RunOutcome> {
    let mut states = Vec::new();
    if cfg.keep_states {
        states.push(state0.clone());
    }
    let (mut r, first) = Run::new(state0, params, cfg)?;
    let mut records = vec![first];
    while !r.done() {
        if let Some(rec) = r.advance()? {
            records.push(rec);
        }
        if cfg.keep_states {
            states.push(r.state().clone());
        }
    }
    let mut out = r.finish();
    out.records = records;
    out.states = states;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct CompatibilityReport {
    /// Boundary L2 norm of `-(nu+kappa) lap u0 + u0.grad u0 + grad pi0 + 2 kappa grad_perp w0`.
    pub boundary_defect: f64,
    /// `||div u0||_2`.
    pub divergence: f64,
    /// Boundary L2 norm of the trace of `u0`.
    pub wall_trace: f64,
    pub pressure: ScalarField,
}

/// Linear extrapolation of interior face values to the two wall faces of
/// each wall-normal line. `len` faces along the line, stride `s`.
fn extrapolate_normal_faces(data: &mut [f64], start: usize, stride: usize, len: usize) {
    data[start] = 2.0 * data[start + stride] - data[start + 2 * stride];
    let last = start + (len - 1) * stride;
    data[last] = 2.0 * data[last - stride] - data[last - 2 * stride];
}

/// Boundary traces of a face field: normal parts read on the wall faces,
/// tangential parts extrapolated from cell centers (zero when the field is
/// flagged no-slip). Returns `(normal, tangential)` samples in the order
/// west, east, south, north.
fn boundary_samples(f: &VelocityField) -> (Vec<f64>, Vec<f64>) {
    let g = f.grid;
    let (cx, cy) = f.to_cell_centers();
    let ex = |a: f64, b: f64| 1.5 * a - 0.5 * b;
    let mut normal = Vec::new();
    let mut tangent = Vec::new();
    for j in 0..g.ny {
        normal.push(f.ux_at(0, j));
        tangent.push(ex(cy.at(0, j), cy.at(1, j)));
    }
    for j in 0..g.ny {
        normal.push(f.ux_at(g.nx, j));
        tangent.push(ex(cy.at(g.nx - 1, j), cy.at(g.nx - 2, j)));
    }
    for i in 0..g.nx {
        normal.push(f.uy_at(i, 0));
        tangent.push(ex(cx.at(i, 0), cx.at(i, 1)));
    }
    for i in 0..g.nx {
        normal.push(f.uy_at(i, g.ny));
        tangent.push(ex(cx.at(i, g.ny - 1), cx.at(i, g.ny - 2)));
    }
    if f.no_slip {
        tangent.iter_mut().for_each(|t| *t = 0.0);
    }
    (normal, tangent)
}

/// Evaluates the initial compatibility conditions: solves the Neumann
/// problem for `pi0` and measures the boundary residual of the momentum
/// balance, the divergence and the wall trace of `u0`.
pub fn check_compatibility(u0: &VelocityField, w0: &ScalarField, params: FluidParams, tol: f64) -> Result<CompatibilityReport> {
    let g = u0.grid;
    g.check_same(&w0.grid)?;
    let h = g.h;
    let (nx, ny) = (g.nx, g.ny);
    let visc = params.viscosity();

    // R = (nu+kappa) lap u0 - u0.grad u0 - 2 kappa grad_perp w0, then
    // extended to wall-normal faces by extrapolation
    let mut r = laplacian_vec(u0).scaled(visc);
    r.axpy(-1.0, &convective_term(u0, u0));
    for j in 0..ny {
        extrapolate_normal_faces(&mut r.ux, j * (nx + 1), 1, nx + 1);
    }
    for i in 0..nx {
        extrapolate_normal_faces(&mut r.uy, i, nx, ny + 1);
    }
    r.axpy(-2.0 * params.kappa, &perp_gradient(w0));

    let conv = convective_term(u0, u0);
    let rhs = divergence(&conv).scaled(-1.0);
    let mut flux = BoundaryFlux::zeros(g);
    for j in 0..ny {
        flux.west[j] = -r.ux_at(0, j);
        flux.east[j] = r.ux_at(nx, j);
    }
    for i in 0..nx {
        flux.south[i] = -r.uy_at(i, 0);
        flux.north[i] = r.uy_at(i, ny);
    }
    let pressure = PoissonSolver::new(g).neumann(&rhs, &flux, tol)?.solution;

    // boundary residual: grad pi0 - R; normal parts use the prescribed
    // flux, tangential parts the extrapolated pressure gradient
    let mut res = gradient(&pressure);
    for j in 0..ny {
        let a = res.ix(0, j);
        res.ux[a] = -flux.west[j];
        let b = res.ix(nx, j);
        res.ux[b] = flux.east[j];
    }
    for i in 0..nx {
        let a = res.iy(i, 0);
        res.uy[a] = -flux.south[i];
        let b = res.iy(i, ny);
        res.uy[b] = flux.north[i];
    }
    res.axpy(-1.0, &r);
    res.no_slip = false;
    let (rn, rt) = boundary_samples(&res);
    let boundary_defect = (rn.iter().chain(&rt).map(|v| v * v).sum::<f64>() * h).sqrt();

    let (un, ut) = boundary_samples(u0);
    let wall_trace = (un.iter().chain(&ut).map(|v| v * v).sum::<f64>() * h).sqrt();

    Ok(CompatibilityReport {
        boundary_defect,
        divergence: divergence(u0).l2(),
        wall_trace,
        pressure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manufactured::{reference_rotation, reference_velocity};
    use std::f64::consts::PI;

    fn params(kappa: f64) -> FluidParams {
        FluidParams::new(0.1, kappa).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(FluidParams::new(0.0, 0.1).is_err());
        assert!(FluidParams::new(0.1, -1.0).is_err());
        assert!(FluidParams::new(0.1, 0.0).is_ok());
    }

    #[test]
    fn advect_without_flow() {
        let g = GridSpec::unit(16).unwrap();
        let w = reference_rotation(g, 1.0).map(|v| v + 0.3);
        let u = VelocityField::zeros(g);
        let same = advect_w(&w, &u, params(0.0), 0.05).unwrap();
        assert_eq!(same, w);
        let damped = advect_w(&w, &u, params(0.2), 0.05).unwrap();
        let e = (-4.0 * 0.2 * 0.05f64).exp();
        for (a, b) in damped.data.iter().zip(&w.data) {
            assert!((a - e * b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = GridSpec::unit(16).unwrap();
        let u = reference_velocity(g, 1.0);
        let w = ScalarField::zeros(g);
        let dt = 2.0 * g.h / u.max_abs();
        assert!(matches!(advect_w(&w, &u, params(0.1), dt), Err(Error::Cfl { .. })));
    }

    #[test]
    fn rotation_transport_is_monotone_and_nearly_conservative() {
        let g = GridSpec::unit(64).unwrap();
        // solid-body-like rotation confined by the bump streamfunction
        let u = reference_velocity(g, 1.0);
        let w0 = ScalarField::from_fn(g, |x, y| (-40.0 * ((x - 0.5).powi(2) + (y - 0.35).powi(2))).exp());
        let dt = 0.5 * g.h / u.max_abs();
        let mut w = w0.clone();
        let steps = (0.25 / dt).ceil() as usize;
        for _ in 0..steps {
            let next = advect_w(&w, &u, params(0.0), dt).unwrap();
            assert!(next.max_abs() <= w.max_abs());
            w = next;
        }
        let rel = (w.l2() - w0.l2()).abs() / w0.l2();
        assert!(rel < 0.1, "{rel}");
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = GridSpec::unit(16).unwrap();
        let s = SimState::zeros(g);
        let n = step(&s, params(0.1), 0.01).unwrap();
        assert_eq!(n.u.max_abs(), 0.0);
        assert_eq!(n.w.max_abs(), 0.0);
        assert_eq!(n.step, 1);
    }

    #[test]
    fn kappa_zero_matches_navier_stokes_bitwise() {
        let g = GridSpec::unit(16).unwrap();
        let it = Integrator::new(g, params(0.0));
        let mut s = SimState::new(reference_velocity(g, 0.5), reference_rotation(g, 1.0)).unwrap();
        let mut u = s.u.clone();
        for _ in 0..5 {
            s = it.step(&s, 0.01).unwrap();
            u = it.navier_stokes_step(&u, 0.01).unwrap();
            assert_eq!(s.u, u);
        }
    }

    #[test]
    fn single_step_from_rest_follows_projected_coupling() {
        let g = GridSpec::unit(32).unwrap();
        let p = params(0.1);
        let it = Integrator::new(g, p);
        let s = SimState::new(VelocityField::zeros(g), reference_rotation(g, 1.0)).unwrap();
        let expected = it.stokes.leray_project(&perp_gradient(&s.w)).scaled(-2.0 * p.kappa);
        let mut errs = Vec::new();
        for dt in [1e-3, 5e-4] {
            let u = it.momentum(&s, dt).unwrap().velocity;
            let e = expected.scaled(dt);
            errs.push(u.sub(&e).l2() / e.l2());
        }
        // the wall boundary layer of width sqrt(nu dt) makes the global
        // error decay like sqrt(dt)
        assert!(errs[0] < 0.1, "{errs:?}");
        assert!(errs[1] < 0.75 * errs[0], "{errs:?}");
    }

    #[test]
    fn dt_policy_splits_evenly() {
        let g = GridSpec::unit(16).unwrap();
        let u = reference_velocity(g, 1.0);
        let pol = DtPolicy { dt_max: 0.03, ..DtPolicy::default() };
        let dt = pol.next_dt(&u, 0.0, 1.0).unwrap();
        let n = (1.0 / dt).round();
        assert!((n * dt - 1.0).abs() < 1e-12);
        assert!(dt <= 0.03 && dt * u.max_abs() / g.h <= 0.9);
        let tight = DtPolicy { dt_floor: 1.0, ..DtPolicy::default() };
        assert!(matches!(tight.next_dt(&u, 0.0, 1.0), Err(Error::DtCollapse { .. })));
    }

    #[test]
    fn compatibility_of_zero_and_reference_data() {
        let g = GridSpec::unit(32).unwrap();
        let z = check_compatibility(&VelocityField::zeros(g), &ScalarField::zeros(g), params(0.1), 1e-10).unwrap();
        assert_eq!(z.boundary_defect, 0.0);
        assert_eq!(z.divergence, 0.0);
        assert_eq!(z.wall_trace, 0.0);
        let r = check_compatibility(&reference_velocity(g, 1.0), &ScalarField::zeros(g), params(0.1), 1e-10).unwrap();
        assert!(r.divergence <= 1e-10 && r.wall_trace <= 1e-10);
        assert!(r.boundary_defect.is_finite());
    }

    #[test]
    fn wall_trace_of_slipping_field() {
        // u = (0, sin(pi x))... tangential trace 0; use u = (0, 1): trace 1 on
        // west/east walls and normal 1 on south/north, total sqrt(4)
        let g = GridSpec::unit(32).unwrap();
        let u = VelocityField::from_fn(g, |_, _| 0.0, |_, y| (PI * y).cos().powi(2));
        let r = check_compatibility(&u, &ScalarField::zeros(g), params(0.1), 1e-10).unwrap();
        // analytic: west/east tangential cos^2(pi y): int cos^4 = 3/8 each;
        // south/north normal 1: length 1 each
        let exact = (2.0 * 3.0 / 8.0 + 2.0f64).sqrt();
        assert!((r.wall_trace - exact).abs() < 1e-2, "{} {exact}", r.wall_trace);
    }

    #[test]
    fn run_with_zero_horizon_echoes_state() {
        let g = GridSpec::unit(16).unwrap();
        let s0 = SimState::new(reference_velocity(g, 0.5), reference_rotation(g, 1.0)).unwrap();
        let out = run(s0.clone(), FluidParams::new(0.1, 0.1).unwrap(), RunConfig::new(0.0)).unwrap();
        assert_eq!(out.state, s0);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.summary.steps, 0);
    }

    #[test]
    fn zero_run_has_zero_diagnostics() {
        let g = GridSpec::unit(16).unwrap();
        let mut cfg = RunConfig::new(1.0);
        cfg.policy.dt_max = 0.1;
        let out = run(SimState::zeros(g), FluidParams::new(0.1, 0.1).unwrap(), cfg).unwrap();
        assert_eq!(out.records.len(), 11);
        assert_eq!(out.state.t, 1.0);
        for r in &out.records {
            assert!(r.values()[1..].iter().all(|v| *v == 0.0), "{r:?}");
        }
        assert_eq!(out.summary.total_violations(), 0);
    }

    #[test]
    fn run_rejects_bad_settings() {
        let g = GridSpec::unit(16).unwrap();
        let p = FluidParams::new(0.1, 0.1).unwrap();
        assert!(Run::new(SimState::zeros(g), p, RunConfig::new(-1.0)).is_err());
        let mut cfg = RunConfig::new(1.0);
        cfg.interval = 0;
        assert!(Run::new(SimState::zeros(g), p, cfg).is_err());
    }

    #[test]
    fn forced_courant_number_sets_the_step() {
        let g = GridSpec::unit(16).unwrap();
        let s0 = SimState::new(reference_velocity(g, 0.5), reference_rotation(g, 1.0)).unwrap();
        let umax = s0.u.max_abs();
        let mut cfg = RunConfig::new(1.0);
        cfg.forced_cfl = Some(2.0);
        let (mut r, _) = Run::new(s0, FluidParams::new(0.1, 0.1).unwrap(), cfg).unwrap();
        r.advance().unwrap();
        assert!((r.state().t - 2.0 * g.h / umax).abs() < 1e-14);
    }
}

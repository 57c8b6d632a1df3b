//! The auxiliary field `v = -(2 kappa / (nu + kappa)) A^-1 grad_perp w`,
//! the shifted velocity `g = u - v`, its source `Q`, and residuals of the
//! evolution equations they satisfy.
//!
//! With `v` scaled as above, `(nu + kappa) lap v` cancels the coupling force
//! `-2 kappa grad_perp w` up to a gradient, so `g = u - v` obeys
//! `g_t - (nu + kappa) lap g + grad p = Q` with
//! `Q = -u.grad u + 4 kappa v + beta A^-1 grad_perp(2 kappa curl u - div(u w))`
//! and `beta = 2 kappa / (nu + kappa)`.

use crate::error::Result;
use crate::grid::{convective_term, flux_divergence, laplacian_vec, perp_divergence, ScalarField, VelocityField};
use crate::micropolar::{FluidParams, SimState};
use crate::stokes::StokesSolver;

#[derive(Clone, Debug)]
pub struct AuxFields {
    pub v: VelocityField,
    pub g: VelocityField,
    pub q: VelocityField,
    /// Stokes pressure belonging to `v`.
    pub p_aux: ScalarField,
    /// `beta A^-1 grad_perp(2 kappa curl u - div(u w))`, the part of `Q`
    /// that also drives `v`.
    pub transport: VelocityField,
}

/// `v` and its pressure.
pub fn compute_v(solver: &StokesSolver, w: &ScalarField, params: FluidParams, tol: f64) -> Result<(VelocityField, ScalarField)> {
    let beta = params.coupling();
    if beta == 0.0 {
        return Ok((VelocityField::zeros(w.grid), ScalarField::zeros(w.grid)));
    }
    let r = solver.a_inv_perp(w, -beta, tol, None)?;
    Ok((r.velocity, r.pressure))
}

/// Scalar driving the rate of change of `v`: `2 kappa curl u - div(u w)`.
pub fn rotation_source(u: &VelocityField, w: &ScalarField, params: FluidParams) -> ScalarField {
    let mut s = flux_divergence(u, w).scaled(-1.0);
    if params.kappa != 0.0 {
        s.axpy(2.0 * params.kappa, &perp_divergence(u));
    }
    s
}

fn transport_part(solver: &StokesSolver, u: &VelocityField, w: &ScalarField, params: FluidParams, tol: f64) -> Result<VelocityField> {
    let beta = params.coupling();
    if beta == 0.0 {
        return Ok(VelocityField::zeros(u.grid));
    }
    let s = rotation_source(u, w, params);
    Ok(solver.a_inv_perp(&s, beta, tol, None)?.velocity)
}

/// `Q` from its parts: `-u.grad u + 4 kappa v + transport`.
fn assemble_q(u: &VelocityField, v: &VelocityField, transport: &VelocityField, params: FluidParams) -> VelocityField {
    let mut q = convective_term(u, u).scaled(-1.0);
    q.axpy(4.0 * params.kappa, v);
    q.axpy(1.0, transport);
    q
}

pub fn compute_q(
    solver: &StokesSolver,
    u: &VelocityField,
    w: &ScalarField,
    v: &VelocityField,
    params: FluidParams,
    tol: f64,
) -> Result<VelocityField> {
    let t = transport_part(solver, u, w, params, tol)?;
    Ok(assemble_q(u, v, &t, params))
}

pub fn compute_aux(solver: &StokesSolver, state: &SimState, params: FluidParams, tol: f64) -> Result<AuxFields> {
    let (v, p_aux) = compute_v(solver, &state.w, params, tol)?;
    let transport = transport_part(solver, &state.u, &state.w, params, tol)?;
    let q = assemble_q(&state.u, &v, &transport, params);
    let g = state.u.sub(&v);
    Ok(AuxFields { v, g, q, p_aux, transport })
}

/// Projected residual of `g_t - (nu + kappa) lap g + grad p = Q` between two
/// consecutive states, with `Q` frozen at the earlier one.
pub fn g_residual(solver: &StokesSolver, a0: &AuxFields, a1: &AuxFields, params: FluidParams, dt: f64) -> f64 {
    let mut r = a1.g.sub(&a0.g).scaled(1.0 / dt);
    r.axpy(-params.viscosity(), &laplacian_vec(&a1.g));
    r.axpy(-1.0, &a0.q);
    solver.leray_project(&r).l2()
}

/// Projected residual of `v_t + 4 kappa v + transport = 0`.
pub fn v_evolution_residual(solver: &StokesSolver, a0: &AuxFields, a1: &AuxFields, params: FluidParams, dt: f64) -> f64 {
    let mut r = a1.v.sub(&a0.v).scaled(1.0 / dt);
    r.axpy(4.0 * params.kappa, &a0.v);
    r.axpy(1.0, &a0.transport);
    solver.leray_project(&r).l2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{divergence, GridSpec};
    use crate::manufactured::{reference_rotation, reference_velocity};

    fn setup(n: usize) -> (GridSpec, StokesSolver) {
        let g = GridSpec::unit(n).unwrap();
        (g, StokesSolver::new(g))
    }

    #[test]
    fn v_vanishes_for_zero_w_or_kappa() {
        let (g, s) = setup(16);
        let p = FluidParams::new(0.1, 0.1).unwrap();
        let (v, _) = compute_v(&s, &ScalarField::zeros(g), p, 1e-9).unwrap();
        assert_eq!(v.max_abs(), 0.0);
        let p0 = FluidParams::new(0.1, 0.0).unwrap();
        let (v, _) = compute_v(&s, &reference_rotation(g, 1.0), p0, 1e-9).unwrap();
        assert_eq!(v.max_abs(), 0.0);
    }

    #[test]
    fn q_at_rest_is_damping_of_v() {
        let (g, s) = setup(16);
        let p = FluidParams::new(0.1, 0.3).unwrap();
        let state = SimState::new(VelocityField::zeros(g), reference_rotation(g, 1.0)).unwrap();
        let a = compute_aux(&s, &state, p, 1e-10).unwrap();
        let expected = a.v.scaled(4.0 * p.kappa);
        assert!(a.q.ux == expected.ux && a.q.uy == expected.uy);
        let z = compute_aux(&s, &SimState::zeros(g), p, 1e-10).unwrap();
        assert_eq!(z.q.max_abs(), 0.0);
    }

    #[test]
    fn shifted_field_identity_and_solenoidality() {
        let (g, s) = setup(16);
        let p = FluidParams::new(0.1, 0.1).unwrap();
        let state = SimState::new(reference_velocity(g, 0.5), reference_rotation(g, 1.0)).unwrap();
        let a = compute_aux(&s, &state, p, 1e-10).unwrap();
        assert_eq!(a.g, state.u.sub(&a.v));
        let mut id = a.g.clone();
        id.axpy(1.0, &a.v);
        assert!(id.sub(&state.u).max_abs() < 1e-15);
        assert!(divergence(&a.v).l2() < 1e-9 && divergence(&a.g).l2() < 1e-9);
        assert_eq!(a.v.wall_normal_max(), 0.0);
    }

    #[test]
    fn compute_v_is_linear() {
        let (g, s) = setup(16);
        let p = FluidParams::new(0.2, 0.1).unwrap();
        let w1 = reference_rotation(g, 1.0);
        let w2 = ScalarField::from_fn(g, |x, y| x * y * (1.0 - x));
        let mut w = w1.scaled(2.0);
        w.axpy(-1.0, &w2);
        let (v1, _) = compute_v(&s, &w1, p, 1e-11).unwrap();
        let (v2, _) = compute_v(&s, &w2, p, 1e-11).unwrap();
        let (v, _) = compute_v(&s, &w, p, 1e-11).unwrap();
        let mut c = v1.scaled(2.0);
        c.axpy(-1.0, &v2);
        assert!(v.sub(&c).max_abs() < 1e-8);
    }

    #[test]
    fn residuals_under_pure_damping() {
        let (g, s) = setup(16);
        let p = FluidParams::new(0.1, 0.25).unwrap();
        let w0 = reference_rotation(g, 1.0);
        let mut res = Vec::new();
        for dt in [0.02, 0.01] {
            let w1 = w0.scaled((-4.0 * p.kappa * dt).exp());
            let s0 = SimState::new(VelocityField::zeros(g), w0.clone()).unwrap();
            let s1 = SimState::new(VelocityField::zeros(g), w1).unwrap();
            let a0 = compute_aux(&s, &s0, p, 1e-11).unwrap();
            let a1 = compute_aux(&s, &s1, p, 1e-11).unwrap();
            res.push(v_evolution_residual(&s, &a0, &a1, p, dt));
        }
        assert!(res[1] < 0.55 * res[0], "{res:?}");
        let z = compute_aux(&s, &SimState::zeros(g), p, 1e-9).unwrap();
        assert_eq!(g_residual(&s, &z, &z, p, 0.1), 0.0);
        assert_eq!(v_evolution_residual(&s, &z, &z, p, 0.1), 0.0);
    }
}

use std::fmt::Write as _;

use micropol_core::micropolar::{run, RunConfig};
use micropol_core::schauder::{fixed_point_solve, uniqueness_probe, FixedPointConfig};

use crate::{initial_state, Context, Failure, EXIT_OK, EXIT_VIOLATION};

/// Deltas of the stability probe.
pub const PROBE_DELTAS: [f64; 3] = [1e-6, 1e-5, 1e-4];
/// Allowed relative spread of `D(T)/D(0)` across deltas.
pub const PROBE_SPREAD: f64 = 0.2;
/// Fixed point vs direct run: `sup_t` distance at most this times `eps + dt`.
pub const ORACLE_FACTOR: f64 = 5.0;

pub(crate) fn fixed_point_command(ctx: &Context) -> Result<i32, Failure> {
    let c = &ctx.config;
    let g = c.grid();
    let params = c.params();
    let s0 = initial_state(c)?;
    let mut fp = FixedPointConfig::for_grid(g, c.t_final);
    if let Some(dt) = c.dt_max {
        fp.dt = dt;
    }
    if let Some(e) = c.epsilon {
        fp.epsilon = e;
    }
    fp.tol = c.picard_tol;
    fp.max_iter = c.max_iter;
    let (traj, rep) = fixed_point_solve(&s0.u, &s0.w, params, fp, None)?;

    let mut rc = RunConfig::new(c.t_final);
    rc.policy.cfl_max = c.cfl_max;
    rc.policy.dt_floor = c.dt_floor;
    rc.policy.dt_max = fp.dt;
    rc.keep_states = true;
    rc.diagnostics.tol = fp.solver_tol;
    let direct = run(s0.clone(), params, rc)?;
    let us: Vec<_> = direct.states.iter().map(|s| s.u.clone()).collect();
    let ws: Vec<_> = direct.states.iter().map(|s| s.w.clone()).collect();
    let distance = traj.sup_distance(&us, &ws);
    let bound = ORACLE_FACTOR * (fp.epsilon + fp.dt);
    let geometric = rep.ratios().iter().all(|r| *r < 1.0);

    let mut growth = Vec::new();
    let mut probe_violations = 0;
    for d in PROBE_DELTAS {
        let p = uniqueness_probe(&s0.u, &s0.w, d, params, c.t_final, fp.dt)?;
        probe_violations += p.violations;
        growth.push(p.growth());
    }
    let (lo, hi) = growth.iter().fold((f64::INFINITY, 0.0f64), |(a, b), g| (a.min(*g), b.max(*g)));
    let spread = if lo > 0.0 { (hi - lo) / lo } else { f64::INFINITY };

    let mut csv = String::from("iteration,distance\n");
    for (k, d) in rep.distances.iter().enumerate() {
        let _ = writeln!(csv, "{},{d:.16e}", k + 1);
    }
    std::fs::write(ctx.out_dir.join("fixed_point.csv"), csv)?;

    let mut failures = Vec::new();
    if !rep.converged {
        failures.push(format!("picard iteration did not reach {:.1e} in {} iterations", fp.tol, rep.iterations));
    }
    if !geometric {
        failures.push("successive distances are not decreasing".to_string());
    }
    if distance > bound {
        failures.push(format!("fixed point differs from direct run by {distance:.3e} > {bound:.3e}"));
    }
    if probe_violations > 0 {
        failures.push(format!("stability envelope violated at {probe_violations} instant(s)"));
    }
    if spread > PROBE_SPREAD {
        failures.push(format!("growth spread {spread:.3e} over deltas exceeds {PROBE_SPREAD}"));
    }
    let mut s = String::new();
    let _ = writeln!(s, "iterations = {}", rep.iterations);
    let _ = writeln!(s, "converged = {}", rep.converged);
    let _ = writeln!(s, "distance_ratios = {:?}", rep.ratios());
    let _ = writeln!(s, "r0 = {:.6e}", rep.r0_check.r0);
    let _ = writeln!(s, "r0_c_fit = {:.6e}", rep.r0_check.c_fit);
    let _ = writeln!(s, "r0_check_passed = {}", rep.r0_check.passed);
    let _ = writeln!(s, "direct_distance = {distance:.6e}");
    let _ = writeln!(s, "direct_bound = {bound:.6e}");
    let _ = writeln!(s, "probe_growth = {growth:?}");
    let _ = writeln!(s, "probe_spread = {spread:.6e}");
    for f in &failures {
        let _ = writeln!(s, "failure: {f}");
    }
    if !rep.r0_check.passed {
        let _ = writeln!(s, "warning: smallness condition not met for R0; proceeding");
        eprintln!("warning: smallness condition not met for R0 = {:.3e}", rep.r0_check.r0);
    }
    std::fs::write(ctx.out_dir.join("fixed_point_summary.txt"), s)?;
    for f in &failures {
        eprintln!("failure: {f}");
    }
    Ok(if failures.is_empty() { EXIT_OK } else { EXIT_VIOLATION })
}

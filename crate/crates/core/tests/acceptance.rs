//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use micropol_core::analysis::{gn_audit, relative_drift, v_h1_audit, DiagnosticsRecord, LedgerSummary, LEDGER_RTOL};
use micropol_core::elliptic::poisson_dirichlet;
use micropol_core::grid::{GridSpec, ScalarField, VelocityField};
use micropol_core::manufactured::{ensemble, reference_rotation, reference_velocity};
use micropol_core::micropolar::{run, FluidParams, Integrator, RunConfig, SimState};
use micropol_core::schauder::{fixed_point_solve, uniqueness_probe, FixedPointConfig};
use micropol_core::stokes::{stokes_stationary, StokesSolver};

const ORDER_MIN: f64 = 1.9;
const SHRINK_MAX: f64 = 0.6;
const G_RESIDUAL_TIER: f64 = 1e-2;
const G_RESIDUAL_FACTOR: f64 = 1.5;
const DRIFT_MAX: f64 = 0.10;
const ORACLE_FACTOR: f64 = 5.0;
const SPREAD_MAX: f64 = 0.20;
const MAX_PICARD: usize = 20;
const ENSEMBLE: usize = 100;
const BAND: usize = 4;
const SEED: u64 = 2024;
const SOLVE_TOL: f64 = 1e-10;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unit(n: usize) -> GridSpec {
    GridSpec::unit(n).expect("grid")
}

/// Fourth-order central second derivative of a closure.
fn d2(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let e = 1e-3;
    (-f(x + 2.0 * e) + 16.0 * f(x + e) - 30.0 * f(x) + 16.0 * f(x - e) - f(x - 2.0 * e)) / (12.0 * e * e)
}

fn d1(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let e = 1e-4;
    (-f(x + 2.0 * e) + 8.0 * f(x + e) - 8.0 * f(x - e) + f(x - 2.0 * e)) / (12.0 * e)
}

fn laplacian(f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64) -> f64 {
    d2(&|s| f(s, y), x) + d2(&|s| f(x, s), y)
}

fn psi(x: f64, y: f64) -> f64 {
    ((PI * x).sin() * (PI * y).sin()).powi(2)
}

fn poisson_error(n: usize) -> f64 {
    let g = unit(n);
    let rhs = ScalarField::from_fn(g, |x, y| -laplacian(&psi, x, y));
    let exact = ScalarField::from_fn(g, psi);
    poisson_dirichlet(&rhs, 1e-12).expect("poisson").solution.sub(&exact).max_abs()
}

fn stokes_error(n: usize) -> f64 {
    let g = unit(n);
    let ux = |x: f64, y: f64| -d1(&|s| psi(x, s), y);
    let uy = |x: f64, y: f64| d1(&|s| psi(s, y), x);
    let p = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let f = VelocityField::from_fn(
        g,
        |x, y| -laplacian(&ux, x, y) + d1(&|s| p(s, y), x),
        |x, y| -laplacian(&uy, x, y) + d1(&|s| p(x, s), y),
    );
    let mut exact = VelocityField::from_fn(g, ux, uy);
    exact.enforce_no_slip();
    stokes_stationary(&f, 1e-11).expect("stokes").velocity.sub(&exact).max_abs()
}

fn criterion_1() -> Verdict {
    let (p32, p64) = (poisson_error(32), poisson_error(64));
    let (s32, s64) = (stokes_error(32), stokes_error(64));
    let (po, so) = ((p32 / p64).log2(), (s32 / s64).log2());
    check(po >= ORDER_MIN && so >= ORDER_MIN, format!("poisson order {po:.3}, stokes order {so:.3} (min {ORDER_MIN})"))
}

fn reference_state(g: GridSpec) -> SimState {
    SimState::new(reference_velocity(g, 0.5), reference_rotation(g, 1.0)).expect("state")
}

fn reference_params() -> FluidParams {
    FluidParams::new(0.1, 0.1).expect("params")
}

fn reference_config(g: GridSpec, t_final: f64) -> RunConfig {
    let mut rc = RunConfig::new(t_final);
    rc.policy.dt_max = 0.25 * g.h;
    rc
}

struct Reference {
    summary: LedgerSummary,
    csv: String,
    l2_u_final: f64,
    u_final: VelocityField,
}

fn reference_run(n: usize) -> Reference {
    let g = unit(n);
    let out = run(reference_state(g), reference_params(), reference_config(g, 1.0)).expect("reference run");
    let mut csv = DiagnosticsRecord::csv_header();
    csv.push('\n');
    for r in &out.records {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    Reference {
        summary: out.summary,
        csv,
        l2_u_final: out.records.last().expect("records").l2_u,
        u_final: out.state.u,
    }
}

/// Face sum with half-weighted wall faces, written out independently.
fn kinetic_l2(u: &VelocityField) -> f64 {
    let g = u.grid;
    let mut s = 0.0;
    for (k, v) in u.ux.iter().enumerate() {
        let i = k % (g.nx + 1);
        let w = if i == 0 || i == g.nx { 0.5 } else { 1.0 };
        s += w * v * v;
    }
    for (k, v) in u.uy.iter().enumerate() {
        let j = k / g.nx;
        let w = if j == 0 || j == g.ny { 0.5 } else { 1.0 };
        s += w * v * v;
    }
    (s * g.h * g.h).sqrt()
}

fn criterion_2(a: &Reference, b: &Reference) -> Verdict {
    let ratio = b.summary.max_energy_defect / a.summary.max_energy_defect;
    let norm_gap = (kinetic_l2(&a.u_final) - a.l2_u_final).abs();
    check(
        a.summary.energy_violations == 0 && ratio <= SHRINK_MAX && norm_gap <= 1e-12,
        format!(
            "{} steps over {LEDGER_RTOL} (max relative {:.3e}), defect 64: {:.3e}, 128: {:.3e}, ratio {ratio:.3} (max {SHRINK_MAX})",
            a.summary.energy_violations,
            a.summary.max_relative_energy_defect,
            a.summary.max_energy_defect,
            b.summary.max_energy_defect
        ),
    )
}

fn criterion_3(a: &Reference, b: &Reference) -> Verdict {
    let ratio = b.summary.max_l4_defect / a.summary.max_l4_defect;
    check(
        a.summary.l4_inequality_violations == 0 && a.summary.l4_identity_violations == 0 && ratio <= SHRINK_MAX,
        format!(
            "identity misses {}, inequality violations {}, defect 64: {:.3e}, 128: {:.3e}, ratio {ratio:.3}",
            a.summary.l4_identity_violations,
            a.summary.l4_inequality_violations,
            a.summary.max_l4_defect,
            b.summary.max_l4_defect
        ),
    )
}

fn fields(n: usize) -> Vec<ScalarField> {
    let g = unit(n);
    ensemble(SEED, ENSEMBLE, BAND).iter().map(|b| b.sample(g)).collect()
}

fn criterion_4() -> Verdict {
    let r: Vec<f64> = [64, 128]
        .iter()
        .map(|&n| v_h1_audit(&StokesSolver::new(unit(n)), &fields(n), reference_params(), SOLVE_TOL).expect("v audit"))
        .collect();
    let d = relative_drift(r[0], r[1]);
    check(d <= DRIFT_MAX, format!("ratio 64: {:.4}, 128: {:.4}, drift {d:.3e}", r[0], r[1]))
}

fn criterion_5(a: &Reference, b: &Reference) -> Verdict {
    let (r64, r128) = (a.summary.max_g_residual, b.summary.max_g_residual);
    let factor = r64 / r128;
    check(
        r64 <= G_RESIDUAL_TIER && factor >= G_RESIDUAL_FACTOR,
        format!("residual 64: {r64:.3e} (tier {G_RESIDUAL_TIER}), 128: {r128:.3e}, factor {factor:.3}"),
    )
}

fn criterion_6() -> Verdict {
    let g = unit(32);
    let params = FluidParams::new(0.1, 0.0).expect("params");
    let mut rc = reference_config(g, 0.25);
    rc.keep_states = true;
    let out = run(reference_state(g), params, rc).expect("kappa = 0 run");
    let mut ns = Integrator::new(g, params);
    ns.tol = rc.diagnostics.tol;
    let mut u = out.states[0].u.clone();
    let (mut mismatches, mut increases) = (0, 0);
    for (k, pair) in out.states.windows(2).enumerate() {
        u = ns.navier_stokes_step(&u, out.samples[k].dt).expect("ns step");
        if u != pair[1].u {
            mismatches += 1;
        }
        if pair[1].w.max_abs() > pair[0].w.max_abs() {
            increases += 1;
        }
    }
    let steps = out.states.len() - 1;
    check(
        mismatches == 0 && increases == 0 && steps > 0,
        format!("{steps} steps, velocity mismatches {mismatches}, sup-norm increases {increases}"),
    )
}

fn small_data(g: GridSpec) -> SimState {
    SimState::new(reference_velocity(g, 0.1), reference_rotation(g, 0.2)).expect("state")
}

fn criterion_7() -> Verdict {
    let g = unit(32);
    let params = reference_params();
    let s0 = small_data(g);
    let fp = FixedPointConfig::for_grid(g, 0.25);
    let (traj, rep) = fixed_point_solve(&s0.u, &s0.w, params, fp, None).expect("fixed point");
    let mut rc = RunConfig::new(0.25);
    rc.policy.dt_max = fp.dt;
    rc.keep_states = true;
    rc.diagnostics.tol = fp.solver_tol;
    let direct = run(s0, params, rc).expect("direct run");
    let us: Vec<_> = direct.states.iter().map(|s| s.u.clone()).collect();
    let ws: Vec<_> = direct.states.iter().map(|s| s.w.clone()).collect();
    let distance = traj.sup_distance(&us, &ws);
    let bound = ORACLE_FACTOR * (fp.epsilon + fp.dt);
    let geometric = rep.ratios().iter().all(|r| *r < 1.0);
    check(
        rep.converged && rep.iterations <= MAX_PICARD && geometric && distance <= bound,
        format!(
            "{} iterations, ratios {:?}, distance {distance:.3e} (bound {bound:.3e})",
            rep.iterations,
            rep.ratios().iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_8() -> Verdict {
    let g = unit(32);
    let s0 = small_data(g);
    let mut growth = Vec::new();
    let mut violations = 0;
    for d in [1e-6, 1e-5, 1e-4] {
        let p = uniqueness_probe(&s0.u, &s0.w, d, reference_params(), 0.25, 0.5 * g.h).expect("probe");
        violations += p.violations;
        growth.push(p.growth());
    }
    let lo = growth.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = growth.iter().cloned().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    check(
        violations == 0 && spread <= SPREAD_MAX,
        format!("violations {violations}, growth {growth:.4?}, spread {spread:.3e}"),
    )
}

fn criterion_9() -> Verdict {
    let a = gn_audit(&fields(64));
    let b = gn_audit(&fields(128));
    let drifts: Vec<f64> = (0..4).map(|k| relative_drift(a[k], b[k])).collect();
    let worst = drifts.iter().cloned().fold(0.0, f64::max);
    let shown: Vec<String> = drifts.iter().map(|d| format!("{d:.3e}")).collect();
    check(worst <= DRIFT_MAX, format!("drifts [{}]", shown.join(", ")))
}

fn criterion_10(a: &Reference, again: &Reference) -> Verdict {
    check(a.csv == again.csv, format!("{} bytes each", a.csv.len()))
}

fn main() {
    let start = Instant::now();
    let (r64, r128, r64b) = std::thread::scope(|s| {
        let h128 = s.spawn(|| reference_run(128));
        let h64b = s.spawn(|| reference_run(64));
        let r64 = reference_run(64);
        (r64, h128.join().expect("128 run"), h64b.join().expect("second 64 run"))
    });
    let verdicts: Vec<(usize, &str, Verdict)> = vec![
        (1, "manufactured convergence", criterion_1()),
        (2, "energy identity", criterion_2(&r64, &r128)),
        (3, "quartic ledger", criterion_3(&r64, &r128)),
        (4, "auxiliary field bound", criterion_4()),
        (5, "shifted field residual", criterion_5(&r64, &r128)),
        (6, "kappa = 0 decoupling", criterion_6()),
        (7, "fixed point vs direct run", criterion_7()),
        (8, "stability probe", criterion_8()),
        (9, "interpolation audit", criterion_9()),
        (10, "determinism", criterion_10(&r64, &r64b)),
    ];
    let mut failed = 0;
    for (k, name, v) in &verdicts {
        match v {
            Ok(d) => println!("PASS criterion {k} ({name}): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {k} ({name}): {d}");
            }
        }
    }
    println!("{} of {} criteria passed in {:.1} s", verdicts.len() - failed, verdicts.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

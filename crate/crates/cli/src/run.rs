use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use micropol_core::analysis::{gradw_ledger, lp_linf_ledger, DiagnosticsRecord, LedgerSummary, LEDGER_RTOL};
use micropol_core::config::Config;
use micropol_core::micropolar::{DtPolicy, Run, RunConfig};
use micropol_core::snapshot;

use crate::{initial_state, Context, Failure, EXIT_FAILURE, EXIT_OK, EXIT_VIOLATION};

/// What one run produced.
#[derive(Clone, Debug)]
pub(crate) struct RunReport {
    pub code: i32,
    pub summary: LedgerSummary,
    pub violations: Vec<String>,
    pub linf_w_monotone: bool,
    pub error: Option<String>,
}

fn run_config(c: &Config) -> RunConfig {
    let mut rc = RunConfig::new(c.t_final);
    rc.policy = DtPolicy {
        cfl_max: c.cfl_max,
        dt_floor: c.dt_floor,
        dt_max: c.dt_max(),
    };
    rc.interval = c.interval;
    rc.forced_cfl = c.forced_cfl;
    rc
}

fn write_row(out: &mut BufWriter<File>, rec: &DiagnosticsRecord) -> std::io::Result<()> {
    writeln!(out, "{}", rec.csv_row())?;
    out.flush()
}

fn violation_lines(s: &LedgerSummary, extra: &[(String, usize)]) -> Vec<String> {
    let mut v = Vec::new();
    let mut add = |name: &str, n: usize, detail: String| {
        if n > 0 {
            v.push(format!("{name}: {n} step(s) beyond tolerance ({detail})"));
        }
    };
    add("energy ledger", s.energy_violations, format!("max relative defect {:.3e}", s.max_relative_energy_defect));
    add("l4 ledger inequality", s.l4_inequality_violations, "Holder form".into());
    add("gronwall envelope a1", s.a1_violations, format!("C = {:.3e}", s.c_a1));
    add("gronwall envelope a2", s.a2_violations, format!("C = {:.3e}", s.c_a2));
    for (name, n) in extra {
        add(name, *n, "per-step check".into());
    }
    v
}

/// Runs one configuration into `out`, writing diagnostics, snapshots and a summary.
pub(crate) fn execute(c: &Config, out: &Path) -> Result<RunReport, Failure> {
    std::fs::create_dir_all(out)?;
    let state0 = initial_state(c)?;
    let params = c.params();
    snapshot::write(&out.join("initial.mpol"), &state0)?;
    let mut csv = BufWriter::new(File::create(out.join("diagnostics.csv"))?);
    writeln!(csv, "{}", DiagnosticsRecord::csv_header())?;
    let (mut r, first) = Run::new(state0, params, run_config(c))?;
    write_row(&mut csv, &first)?;
    let mut error = None;
    while !r.done() {
        match r.advance() {
            Ok(Some(rec)) => write_row(&mut csv, &rec)?,
            Ok(None) => {}
            Err(e) => {
                snapshot::write(&out.join("dump.mpol"), r.state())?;
                error = Some(e.to_string());
                break;
            }
        }
    }
    csv.flush()?;
    let end_state = r.state().clone();
    let outcome = r.finish();
    let mut summary_text = String::new();
    let s = &outcome.summary;
    let lq = lp_linf_ledger(&outcome.samples, params, LEDGER_RTOL);
    let gw = gradw_ledger(&outcome.samples, params, LEDGER_RTOL);
    let mut extra = Vec::new();
    for rep in &lq {
        extra.push((format!("lq ledger q={}", rep.q), rep.violations));
        extra.push((format!("lq majorant q={}", rep.q), rep.majorant_violations));
    }
    extra.push(("grad w ledger".to_string(), gw.violations));
    extra.push(("grad w envelope".to_string(), gw.envelope_violations));
    let violations = violation_lines(s, &extra);

    let _ = writeln!(summary_text, "t_end = {:.16e}", end_state.t);
    let _ = writeln!(summary_text, "steps = {}", s.steps);
    let _ = writeln!(summary_text, "max_relative_energy_defect = {:.6e}", s.max_relative_energy_defect);
    let _ = writeln!(summary_text, "max_energy_defect = {:.6e}", s.max_energy_defect);
    let _ = writeln!(summary_text, "max_l4_defect = {:.6e}", s.max_l4_defect);
    let _ = writeln!(summary_text, "max_relative_l4_defect = {:.6e}", s.max_relative_l4_defect);
    let _ = writeln!(summary_text, "l4_identity_steps_above_tolerance = {}", s.l4_identity_violations);
    let _ = writeln!(summary_text, "max_g_residual = {:.6e}", s.max_g_residual);
    let _ = writeln!(summary_text, "max_vt_residual = {:.6e}", s.max_vt_residual);
    let _ = writeln!(summary_text, "max_divergence = {:.6e}", s.max_divergence);
    let _ = writeln!(summary_text, "c_a1 = {:.6e}", s.c_a1);
    let _ = writeln!(summary_text, "c_a2 = {:.6e}", s.c_a2);
    let _ = writeln!(summary_text, "linf_w_increases = {}", s.linf_w_increases);
    let _ = writeln!(summary_text, "grad_w_phi_integral = {:.6e}", gw.phi_integral);
    let _ = writeln!(summary_text, "violations = {}", violations.len());
    for v in &violations {
        let _ = writeln!(summary_text, "violation: {v}");
    }
    let code = if let Some(e) = &error {
        let _ = writeln!(summary_text, "error: {e}");
        EXIT_FAILURE
    } else {
        snapshot::write(&out.join("final.mpol"), &end_state)?;
        if violations.is_empty() {
            EXIT_OK
        } else {
            EXIT_VIOLATION
        }
    };
    let _ = writeln!(summary_text, "exit = {code}");
    std::fs::write(out.join("summary.txt"), summary_text)?;
    Ok(RunReport {
        code,
        summary: outcome.summary.clone(),
        violations,
        linf_w_monotone: s.linf_w_increases == 0,
        error,
    })
}

pub(crate) fn run_command(ctx: &Context) -> Result<i32, Failure> {
    let rep = execute(&ctx.config, &ctx.out_dir)?;
    if let Some(e) = &rep.error {
        eprintln!("run aborted: {e} (state dumped to dump.mpol)");
    }
    for v in &rep.violations {
        eprintln!("violation: {v}");
    }
    Ok(rep.code)
}

/// Runs every `(nu, kappa, nx)` cell on a bounded worker pool.
pub(crate) fn sweep_command(ctx: &Context) -> Result<i32, Failure> {
    let c = &ctx.config;
    let nus = if c.sweep_nu.is_empty() { vec![c.nu] } else { c.sweep_nu.clone() };
    let kappas = if c.sweep_kappa.is_empty() { vec![c.kappa] } else { c.sweep_kappa.clone() };
    let nxs = if c.sweep_nx.is_empty() { vec![c.nx] } else { c.sweep_nx.clone() };
    let mut cells = Vec::new();
    for &nu in &nus {
        for &kappa in &kappas {
            for &nx in &nxs {
                let mut cc = c.clone();
                cc.nu = nu;
                cc.kappa = kappa;
                cc.ny = (nx as f64 * c.ly / c.lx).round() as usize;
                cc.nx = nx;
                cells.push(cc);
            }
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunReport, Failure>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let workers = c.workers.min(cells.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(k) else { break };
                let dir = ctx.out_dir.join(format!("cell_{k:03}"));
                let r = if grid_ok(cell) { execute(cell, &dir) } else { Err(Failure::Config(format!("cell {k}: grid {}x{} invalid", cell.nx, cell.ny))) };
                if let Ok(mut g) = results.lock() {
                    g[k] = Some(r);
                }
            });
        }
    });
    let results = results.into_inner().unwrap_or_else(|p| p.into_inner());
    let mut table = String::from("cell,nu,kappa,nx,exit,steps,violations,c_a1,c_a2,linf_w_monotone,max_relative_energy_defect\n");
    let mut failed = false;
    for (k, (cell, r)) in cells.iter().zip(results).enumerate() {
        match r {
            Some(Ok(rep)) => {
                failed |= rep.code != EXIT_OK;
                let s = &rep.summary;
                let _ = writeln!(
                    table,
                    "{k},{},{},{},{},{},{},{:.6e},{:.6e},{},{:.6e}",
                    cell.nu,
                    cell.kappa,
                    cell.nx,
                    rep.code,
                    s.steps,
                    rep.violations.len(),
                    s.c_a1,
                    s.c_a2,
                    rep.linf_w_monotone,
                    s.max_relative_energy_defect
                );
            }
            Some(Err(f)) => {
                failed = true;
                let _ = writeln!(table, "{k},{},{},{},{},,,,,,", cell.nu, cell.kappa, cell.nx, f.code());
                eprintln!("cell {k}: {f}");
            }
            None => {
                failed = true;
                let _ = writeln!(table, "{k},{},{},{},{},,,,,,", cell.nu, cell.kappa, cell.nx, EXIT_FAILURE);
            }
        }
    }
    std::fs::write(ctx.out_dir.join("sweep.csv"), table)?;
    Ok(if failed { EXIT_VIOLATION } else { EXIT_OK })
}

fn grid_ok(c: &Config) -> bool {
    micropol_core::grid::GridSpec::new(c.nx, c.ny, c.lx, c.ly).is_ok()
}

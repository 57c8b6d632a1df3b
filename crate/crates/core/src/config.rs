//! Flat `key = value` run configuration.
//!
//! `#` starts a comment. Every key is optional; unknown or repeated keys are
//! errors. All problems are collected, each with its line number.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::grid::GridSpec;
use crate::micropolar::{FluidParams, DEFAULT_CFL_MAX, DEFAULT_DT_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Run,
    FixedPoint,
    Audit,
    Sweep,
    Verify,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "run" => Self::Run,
            "fixed-point" => Self::FixedPoint,
            "audit" => Self::Audit,
            "sweep" => Self::Sweep,
            "verify" => Self::Verify,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Run => "run",
            Self::FixedPoint => "fixed-point",
            Self::Audit => "audit",
            Self::Sweep => "sweep",
            Self::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Zero,
    /// `u = u_amp curl(sin^2 sin^2)`, `w = w_amp sin sin`.
    Reference,
    /// `u = 0`, `w = w_amp sin sin`.
    Rotation,
    Snapshot(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub nu: f64,
    pub kappa: f64,
    pub initial: InitialCondition,
    pub u_amp: f64,
    pub w_amp: f64,
    /// Final time, key `T`.
    pub t_final: f64,
    pub cfl_max: f64,
    pub dt_floor: f64,
    /// Cap on the step; `None` means a quarter of the cell size.
    pub dt_max: Option<f64>,
    pub forced_cfl: Option<f64>,
    pub interval: usize,
    pub out_dir: PathBuf,
    /// Subcommand this file is meant for, when it names one.
    pub mode: Option<Mode>,
    pub sweep_nu: Vec<f64>,
    pub sweep_kappa: Vec<f64>,
    pub sweep_nx: Vec<usize>,
    pub workers: usize,
    /// Mollifier width; `None` means one cell.
    pub epsilon: Option<f64>,
    pub picard_tol: f64,
    pub max_iter: usize,
    pub ensemble_size: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            lx: 1.0,
            ly: 1.0,
            nu: 0.1,
            kappa: 0.1,
            initial: InitialCondition::Reference,
            u_amp: 0.5,
            w_amp: 1.0,
            t_final: 1.0,
            cfl_max: DEFAULT_CFL_MAX,
            dt_floor: DEFAULT_DT_FLOOR,
            dt_max: None,
            forced_cfl: None,
            interval: 10,
            out_dir: PathBuf::from("out"),
            mode: None,
            sweep_nu: Vec::new(),
            sweep_kappa: Vec::new(),
            sweep_nx: Vec::new(),
            workers: 4,
            epsilon: None,
            picard_tol: 1e-8,
            max_iter: 20,
            ensemble_size: 100,
        }
    }
}

impl Config {
    /// Grid validated at parse time.
    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.nx, self.ny, self.lx, self.ly).unwrap_or_else(|e| panic!("config grid invalid: {e}"))
    }

    pub fn params(&self) -> FluidParams {
        FluidParams::new(self.nu, self.kappa).unwrap_or_else(|e| panic!("config params invalid: {e}"))
    }

    pub fn dt_max(&self) -> f64 {
        self.dt_max.unwrap_or(0.25 * self.grid().h)
    }
}

/// One problem found while parsing; `line` is 1-based, 0 for the file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, i) in self.issues.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "line {}: {}", i.line, i.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

pub const KEYS: [&str; 25] = [
    "nx",
    "ny",
    "lx",
    "ly",
    "nu",
    "kappa",
    "initial",
    "u_amp",
    "w_amp",
    "T",
    "cfl_max",
    "dt_floor",
    "dt_max",
    "forced_cfl",
    "interval",
    "out_dir",
    "mode",
    "sweep_nu",
    "sweep_kappa",
    "sweep_nx",
    "workers",
    "epsilon",
    "picard_tol",
    "max_iter",
    "ensemble_size",
];

struct Parser {
    issues: Vec<ConfigIssue>,
}

impl Parser {
    fn issue(&mut self, line: usize, message: String) {
        self.issues.push(ConfigIssue { line, message });
    }

    fn real(&mut self, line: usize, key: &str, v: &str, ok: impl Fn(f64) -> bool, range: &str) -> Option<f64> {
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() && ok(x) => Some(x),
            Ok(x) => {
                self.issue(line, format!("{key} = {x} is out of range ({range})"));
                None
            }
            Err(_) => {
                self.issue(line, format!("{key}: expected a number, got '{v}'"));
                None
            }
        }
    }

    fn int(&mut self, line: usize, key: &str, v: &str, lo: usize, hi: usize) -> Option<usize> {
        match v.parse::<usize>() {
            Ok(x) if (lo..=hi).contains(&x) => Some(x),
            Ok(x) => {
                self.issue(line, format!("{key} = {x} is out of range ({lo}..={hi})"));
                None
            }
            Err(_) => {
                self.issue(line, format!("{key}: expected a non-negative integer, got '{v}'"));
                None
            }
        }
    }

    fn list<T>(&mut self, line: usize, key: &str, v: &str, mut each: impl FnMut(&mut Self, &str) -> Option<T>) -> Option<Vec<T>> {
        let items: Vec<&str> = v.split(',').map(str::trim).collect();
        if items.iter().any(|s| s.is_empty()) {
            self.issue(line, format!("{key}: empty list entry"));
            return None;
        }
        let before = self.issues.len();
        let out: Vec<T> = items.iter().filter_map(|s| each(self, s)).collect();
        (self.issues.len() == before).then_some(out)
    }
}

const MAX_CELLS: usize = 4096;

/// Parses a config; relative snapshot paths are resolved against `base`.
pub fn parse_config_in(text: &str, base: &Path) -> Result<Config, ConfigError> {
    let mut p = Parser { issues: Vec::new() };
    let mut c = Config::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            p.issue(line, format!("expected 'key = value', got '{body}'"));
            continue;
        };
        let (key, v) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            p.issue(line, format!("unknown key '{key}'"));
            continue;
        }
        if let Some(prev) = seen.get(key) {
            p.issue(line, format!("duplicate key '{key}' (first set on line {prev})"));
            continue;
        }
        seen.insert(key.to_string(), line);
        match key {
            "nx" => c.nx = p.int(line, key, v, 8, MAX_CELLS).unwrap_or(c.nx),
            "ny" => c.ny = p.int(line, key, v, 8, MAX_CELLS).unwrap_or(c.ny),
            "lx" => c.lx = p.real(line, key, v, |x| x > 0.0, "> 0").unwrap_or(c.lx),
            "ly" => c.ly = p.real(line, key, v, |x| x > 0.0, "> 0").unwrap_or(c.ly),
            "nu" => c.nu = p.real(line, key, v, |x| x > 0.0, "> 0").unwrap_or(c.nu),
            "kappa" => c.kappa = p.real(line, key, v, |x| x >= 0.0, ">= 0").unwrap_or(c.kappa),
            "u_amp" => c.u_amp = p.real(line, key, v, |_| true, "finite").unwrap_or(c.u_amp),
            "w_amp" => c.w_amp = p.real(line, key, v, |_| true, "finite").unwrap_or(c.w_amp),
            "T" => c.t_final = p.real(line, key, v, |x| x >= 0.0, ">= 0").unwrap_or(c.t_final),
            "cfl_max" => c.cfl_max = p.real(line, key, v, |x| x > 0.0 && x <= 10.0, "(0, 10]").unwrap_or(c.cfl_max),
            "dt_floor" => c.dt_floor = p.real(line, key, v, |x| x > 0.0, "> 0").unwrap_or(c.dt_floor),
            "dt_max" => c.dt_max = p.real(line, key, v, |x| x > 0.0, "> 0").or(c.dt_max),
            "forced_cfl" => c.forced_cfl = p.real(line, key, v, |x| x > 0.0 && x <= 10.0, "(0, 10]").or(c.forced_cfl),
            "interval" => c.interval = p.int(line, key, v, 1, usize::MAX).unwrap_or(c.interval),
            "workers" => c.workers = p.int(line, key, v, 1, 256).unwrap_or(c.workers),
            "max_iter" => c.max_iter = p.int(line, key, v, 1, 10_000).unwrap_or(c.max_iter),
            "ensemble_size" => c.ensemble_size = p.int(line, key, v, 1, 100_000).unwrap_or(c.ensemble_size),
            "epsilon" => c.epsilon = p.real(line, key, v, |x| x >= 0.0, ">= 0").or(c.epsilon),
            "picard_tol" => c.picard_tol = p.real(line, key, v, |x| x > 0.0, "> 0").unwrap_or(c.picard_tol),
            "out_dir" => {
                if v.is_empty() {
                    p.issue(line, "out_dir must not be empty".into());
                } else {
                    c.out_dir = PathBuf::from(v);
                }
            }
            "mode" => match Mode::parse(v) {
                Some(m) => c.mode = Some(m),
                None => p.issue(line, format!("mode must be run, fixed-point, audit, sweep or verify, got '{v}'")),
            },
            "initial" => {
                c.initial = match v {
                    "zero" => InitialCondition::Zero,
                    "reference" => InitialCondition::Reference,
                    "rotation" => InitialCondition::Rotation,
                    "" => {
                        p.issue(line, "initial must name a field or a snapshot path".into());
                        continue;
                    }
                    path => {
                        let full = base.join(path);
                        if !full.is_file() {
                            p.issue(line, format!("snapshot '{}' does not exist", full.display()));
                        }
                        InitialCondition::Snapshot(full)
                    }
                }
            }
            "sweep_nu" => {
                c.sweep_nu = p
                    .list(line, key, v, |p, s| p.real(line, key, s, |x| x > 0.0, "> 0"))
                    .unwrap_or_default()
            }
            "sweep_kappa" => {
                c.sweep_kappa = p
                    .list(line, key, v, |p, s| p.real(line, key, s, |x| x >= 0.0, ">= 0"))
                    .unwrap_or_default()
            }
            "sweep_nx" => {
                c.sweep_nx = p
                    .list(line, key, v, |p, s| p.int(line, key, s, 8, MAX_CELLS))
                    .unwrap_or_default()
            }
            _ => unreachable!("key list and match arms disagree"),
        }
    }

    let grid_keys = ["nx", "ny", "lx", "ly"];
    let grid_line = grid_keys.iter().filter_map(|k| seen.get(*k)).copied().max().unwrap_or(0);
    let grid_bad = p.issues.iter().any(|i| grid_keys.iter().any(|k| seen.get(*k) == Some(&i.line)));
    if !grid_bad {
        if let Err(e) = GridSpec::new(c.nx, c.ny, c.lx, c.ly) {
            let msg = e.to_string();
            let msg = msg.strip_prefix("configuration error: ").unwrap_or(&msg).to_string();
            p.issue(grid_line, msg);
        }
    }
    if p.issues.is_empty() {
        Ok(c)
    } else {
        p.issues.sort_by_key(|i| i.line);
        Err(ConfigError { issues: p.issues })
    }
}

/// [`parse_config_in`] relative to the working directory.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    parse_config_in(text, Path::new("."))
}

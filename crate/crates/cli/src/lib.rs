//! `micropol` command-line driver.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use micropol_core::config::{parse_config_in, Config, ConfigError, InitialCondition, Mode};
use micropol_core::grid::VelocityField;
use micropol_core::manufactured::{reference_rotation, reference_velocity};
use micropol_core::micropolar::SimState;
use micropol_core::{snapshot, Error};

mod checks;
mod fixed;
mod run;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_CONFIG: i32 = 64;

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Parser, Debug)]
#[command(name = "micropol", about = "Micropolar fluid solver and estimate audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seed for random ensembles.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Test hook: corrupts one discrete identity inside `verify`.
    #[arg(long, hide = true)]
    break_stencil: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the coupled system and write diagnostics.
    Run(Common),
    /// Picard construction compared against the direct solver.
    FixedPoint(Common),
    /// Inequality audits on random ensembles at two resolutions.
    Audit(Common),
    /// Cartesian sweep over viscosity, coupling and resolution.
    Sweep(Common),
    /// Property suite at two resolutions.
    Verify(Common),
}

/// Command failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Solver(_) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Solver(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Self::Config(m),
            other => Self::Solver(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Solver(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

/// Settings shared by every command.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: Config,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub break_stencil: bool,
}

fn load(common: &Common) -> Result<Context, Failure> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let base = common.config.parent().unwrap_or(Path::new("."));
    let config = parse_config_in(&text, base)?;
    let out_dir = common.out_dir.clone().unwrap_or_else(|| config.out_dir.clone());
    std::fs::create_dir_all(&out_dir)?;
    Ok(Context {
        config,
        out_dir,
        seed: common.seed,
        break_stencil: common.break_stencil,
    })
}

/// Initial state named by the config.
pub fn initial_state(c: &Config) -> Result<SimState, Failure> {
    let g = c.grid();
    let s = match &c.initial {
        InitialCondition::Zero => SimState::zeros(g),
        InitialCondition::Reference => SimState::new(reference_velocity(g, c.u_amp), reference_rotation(g, c.w_amp))?,
        InitialCondition::Rotation => SimState::new(VelocityField::zeros(g), reference_rotation(g, c.w_amp))?,
        InitialCondition::Snapshot(p) => {
            let s = snapshot::read(p)?;
            if s.grid() != g {
                return Err(Failure::Config(format!(
                    "snapshot {} is {}x{}, config grid is {}x{}",
                    p.display(),
                    s.grid().nx,
                    s.grid().ny,
                    g.nx,
                    g.ny
                )));
            }
            s
        }
    };
    Ok(s)
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    type Handler = fn(&Context) -> Result<i32, Failure>;
    let (common, mode, cmd): (&Common, Mode, Handler) = match &cli.command {
        Command::Run(c) => (c, Mode::Run, run::run_command),
        Command::FixedPoint(c) => (c, Mode::FixedPoint, fixed::fixed_point_command),
        Command::Audit(c) => (c, Mode::Audit, checks::audit_command),
        Command::Sweep(c) => (c, Mode::Sweep, run::sweep_command),
        Command::Verify(c) => (c, Mode::Verify, checks::verify_command),
    };
    let outcome = load(common).and_then(|ctx| match ctx.config.mode {
        Some(m) if m != mode => Err(Failure::Config(format!(
            "config is for mode '{}' but the subcommand is '{}'",
            m.name(),
            mode.name()
        ))),
        _ => cmd(&ctx),
    });
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("{f}");
            f.code()
        }
    }
}

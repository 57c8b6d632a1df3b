use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("CFL number {cfl:.3} exceeds the allowed maximum {max:.3}")]
    Cfl { cfl: f64, max: f64 },

    #[error("time step collapsed to {dt:.3e} at t = {t:.6} (floor {floor:.3e})")]
    DtCollapse { t: f64, dt: f64, floor: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("snapshot decode error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

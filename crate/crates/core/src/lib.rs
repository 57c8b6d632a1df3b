// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
mod fastdiag;
pub mod analysis;
pub mod auxiliary;
pub mod config;
pub mod elliptic;
pub mod grid;
pub mod manufactured;
pub mod micropolar;
pub mod schauder;
pub mod snapshot;
pub mod stokes;

pub use error::{Error, Result};

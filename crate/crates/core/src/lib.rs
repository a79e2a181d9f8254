//! Light field super-resolution with omni-frequency decomposition and
//! iterative frequency projection.

pub mod autograd;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod lightfield;
pub mod model;
pub mod train;

pub use error::{Error, Result};

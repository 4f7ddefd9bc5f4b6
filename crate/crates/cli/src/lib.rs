//! Experiment harness around the `polyargmax` kernels.

pub mod error;
pub mod grid;
pub mod io;
pub mod report;
pub mod tasks;

pub use error::{CliError, Result};

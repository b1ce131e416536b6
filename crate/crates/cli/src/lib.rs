//! Config-driven experiment runner for twisted-tube computations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod record;
pub mod sweep;
pub mod tasks;

pub use config::{RunConfig, Task};
pub use error::CliError;
pub use record::{run, run_in, ResultRecord};
pub use sweep::{sweep, SweepResult};

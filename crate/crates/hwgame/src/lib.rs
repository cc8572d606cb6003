//! Batch front end for the worst-case portfolio game: configuration, the
//! solve/certify/simulate/restricted pipelines and their file formats.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod exec;
pub mod output;

pub use commands::{exit_code, Command, Failure, Status};
pub use config::{Overrides, Resolved, RunConfig};

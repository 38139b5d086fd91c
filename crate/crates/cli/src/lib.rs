//! Command implementations behind the `adadfq` binary: configuration,
//! checkpoints, audited file reads and report writers.

// `!(a < b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod audit;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use error::CliError;

//! Configuration, command implementations and file formats around `tracefem-core`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;

pub use config::{LoadedConfig, RunConfig};
pub use error::CliError;
pub use manifest::{execute, Command, Manifest, RunResult};

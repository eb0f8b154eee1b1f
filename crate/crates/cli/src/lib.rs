//! Library half of the `windsr` command: every verb is callable directly.

pub mod commands;
mod error;
pub mod plot;
pub mod run_config;

pub use error::{invalid, CliError};

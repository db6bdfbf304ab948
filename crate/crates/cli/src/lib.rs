//! Configuration-driven experiment runner around the `monocvar` core.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod props;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

//! Command-line driver and HTTP service around `metaflow-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod server;

pub use config::{ServiceConfig, TrainFile};
pub use error::{CliError, CliResult};
pub use server::{router, AppState};

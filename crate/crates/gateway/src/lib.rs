//! Batch CLI commands and the interactive operator API for the simulator.

pub mod api;
pub mod commands;
pub mod config;
mod error;
pub mod server;

pub use config::RunConfig;
pub use error::GatewayError;

//! Command-line client: every node API operation, plus offline chain
//! verification and consensus simulation.

pub mod args;
pub mod client;
pub mod commands;
pub mod error;
pub mod output;
pub mod profile;
pub mod verify;

pub use args::Cli;
pub use commands::run;
pub use error::CliError;

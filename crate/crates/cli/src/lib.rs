//! Library surface of the `fbcast` binary: configuration, CSV schemas
//! and the subcommand implementations, exposed so integration tests can
//! drive runs in-process.

pub mod commands;
pub mod config;
pub mod csvio;

//! Pipeline runner behind the `tree-alime` binary: run configuration,
//! write-once artifact store, and the subcommands.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod store;

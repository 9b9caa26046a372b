//! Library surface of the experiment runner: configuration, file I/O, and
//! the subcommand implementations, shared by the binary and the test suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod runio;

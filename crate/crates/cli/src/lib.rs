//! Command-line front end for training, evaluating, predicting and serving
//! text scoring models.

pub mod commands;
pub mod server;

pub use commands::{run, Cli, Command};

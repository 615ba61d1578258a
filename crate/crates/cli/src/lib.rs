// SPDX-License-Identifier: Apache-2.0

//! Experiment harness for splat regression: key-value configs, built-in
//! targets and the `splatreg` subcommands.

pub mod config;
pub mod gradcheck;
pub mod run;
pub mod targets;

pub use run::{run, run_config, Command, RunError, Summary};

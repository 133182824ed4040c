//! Command-line front end for `dcm-core`: control files, verbs and output files.

pub mod commands;
pub mod control;
pub mod error;
pub mod output;

pub use commands::{execute, Outcome, Overrides, Verb};
pub use control::ControlFile;
pub use error::{exit, CliError};

//! Command implementations, model files and reports for the `strucred` binary.

pub mod commands;
pub mod error;
pub mod modelfile;
pub mod report;

pub use commands::{Output, Settings};
pub use error::CliError;
pub use modelfile::ModelFile;
pub use report::{Format, ReportBundle};

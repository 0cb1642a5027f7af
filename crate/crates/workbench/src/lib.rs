//! Experiment runner: configuration, profile ingestion, figure sweeps and
//! CSV output for `smartleak-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod ingest;
pub mod sweeps;
pub mod table;

pub use config::Config;
pub use error::{Result, WorkbenchError};
pub use table::Table;

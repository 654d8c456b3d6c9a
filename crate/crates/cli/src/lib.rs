//! Scenario runner, parameter sweeps and relative entropy audits on top of
//! the `anisoflow` scheme. The `anisoflow` binary is a thin clap front end.

pub mod audit;
pub mod error;
pub mod plot;
pub mod runner;
pub mod scenario;
pub mod sweep;

pub use error::{CliError, CliResult};

//! Scenario presets, reference solutions and reports for `dualsmooth`.

pub mod config;
pub mod error;
pub mod instance;
pub mod reference;
pub mod report;
pub mod run;
pub mod scenario;

pub use error::{BenchError, Result};

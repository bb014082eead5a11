//! Declarative experiment runner: scenario files, time sweeps, CSV output
//! and the regression suite.

mod config;
mod run;
mod verify;

pub use config::*;
pub use run::*;
pub use verify::*;

//! Numerical checks of spectrum broadcast structures for a continuous
//! variable coupled to finite-dimensional environments through
//! `X ⊗ Σ g_k B_k`.
//!
//! Modules build on each other in order: [`numkit`] (dense linear algebra),
//! [`cvgrid`] (grids and kernel densities), [`envmodel`] (environments),
//! [`dynamics`] (evolution and the decoherence kernel), [`sbs`] (candidate
//! states and diagnostics), [`bounds`] (inequality evaluators) and
//! [`runner`] (scenario files, sweeps, CSV output and the verify suite).

pub mod bounds;
pub mod cvgrid;
pub mod dynamics;
pub mod envmodel;
pub mod error;
pub mod numkit;
pub mod runner;
pub mod sbs;

pub use error::{Error, Result};

/// Default cap on any joint Hilbert-space dimension.
pub const DEFAULT_CAP: usize = 8192;

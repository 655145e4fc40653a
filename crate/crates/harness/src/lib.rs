//! Experiments and command-line tooling around `ntkgauss-core`: synthetic data,
//! trained ensembles, Wasserstein width sweeps, Gaussian bands, power-law fits,
//! and CSV/SVG/JSON output.

// Guards written as `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod output;

pub use config::RunConfig;
pub use error::{HarnessError, Result};

//! Numerical core for shallow-network neural tangent kernels.
//!
//! The crate covers the finite-width network and its empirical kernels
//! ([`network`]), the infinite-width kernels ([`kernels`]), closed-form
//! linearized training dynamics ([`lindyn`]), the time-indexed Gaussian
//! process that the trained network approaches as width grows ([`gp`]), and
//! exact empirical 2-Wasserstein distances ([`ot`]).

// Guards written as `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod bounds;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod lindyn;
pub mod matops;
pub mod network;
pub mod ot;
pub mod rng;
pub mod stats;

pub use activation::{Activation, ActivationNorms};
pub use error::{Error, Result};
pub use matops::{EigDecomp, SymMatrix};
pub use network::{Dataset, NetworkParams, Trajectory};

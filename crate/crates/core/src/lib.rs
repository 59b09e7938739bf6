//! Quantum fidelity kernels, classical baselines and a precomputed-kernel
//! C-SVC, with the spectral and statistical tooling used to compare them.

// `!(x > 0.0)` checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kernels;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod runner;
pub mod spectra;
pub mod statevec;
pub mod svc;

pub use error::{Error, Result};

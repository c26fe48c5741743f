//! Simulated tempering Metropolis-Hastings for Gaussian-mixture targets,
//! a finite-chain spectral verification laboratory, and a benchmark harness.
//!
//! The crate is split along the pipeline:
//!
//! - [`target`]: mixture potential and tempered / tilde densities (log domain).
//! - [`kernels`]: the RWMH local kernel and the tempering composite step.
//! - [`ladder`]: temperature schedules, partition estimation, level weights.
//! - [`spectral`]: exact verification on discretized chains (stationarity,
//!   projected chains, restricted spectral gaps, decomposition and mixing
//!   bounds, canonical paths).
//! - [`experiments`]: scaling and accuracy studies with seeded parallel
//!   replicates and CSV-friendly outputs.
//! - [`quad`]: adaptive Gauss-Kronrod quadrature used only as an oracle.

pub mod config;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod ladder;
pub mod math;
pub mod quad;
pub mod spectral;
pub mod target;

pub use error::{Error, Result};

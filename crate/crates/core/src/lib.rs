//! Discovering parameter-sharing schemes from data.
//!
//! A sharing scheme is a binary row-stochastic matrix `A` tying model
//! parameters `θ = Aψ` to a smaller set of free parameters. This crate
//! provides the partition view of such schemes together with the partition
//! distance, the Gaussian shared-mean analysis, exact and relaxed bi-level
//! discovery, and generators for linear tasks with known equivariances.

pub mod discovery;
pub mod error;
pub mod gaussian;
pub mod lintasks;
pub mod numerics;
pub mod partition;

pub use error::{Error, Result};

//! Wide-beam sonar mapping with dependency-aware sensor fusion.
//!
//! The pipeline simulates sonar firings in a segment world with specular
//! surfaces, partitions space into quasi-invariant regions induced by the
//! readings, builds a three-level Bayes network over region occupancies, and
//! computes posterior occupancy maps that discount specular dropouts.
//! Independent per-cell baselines (Bayesian grid update and Dempster-Shafer
//! combination) are included for comparison.

pub mod baselines;
pub mod bayes;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod mapper;
pub mod partition;
pub mod world;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

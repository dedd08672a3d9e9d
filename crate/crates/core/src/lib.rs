//! Combining summary measures reported by several sources, each with its own
//! uncertainty, under classical and hierarchical Bayesian models.

pub mod bbm;
pub mod classical;
pub mod data;
pub mod densities;
pub mod error;
pub mod linalg;
pub mod mcmc;
pub mod ppc;
mod reparam;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod ubm;

pub use error::{Error, Result};

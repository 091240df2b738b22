//! Parallel exact MCMC inference for Dirichlet-process mixtures and
//! hierarchical Dirichlet-process topic models.

pub mod data;
pub mod dpmm;
pub mod engine;
pub mod error;
pub mod eval;
pub mod hdp;
pub mod model;
pub mod partition;
pub mod rng;

pub use error::{Error, Result};

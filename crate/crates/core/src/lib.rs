//! Estimating causal effects of latent textual treatments.
//!
//! The pipeline runs from sparse-autoencoder feature probing, through
//! steering-quality scoring and embedding residualization, to cross-fitted
//! R-learner estimation, with a synthetic simulation engine and exact
//! oracles for the identification results.

pub mod data;
pub mod design;
pub mod error;
pub mod estimate;
pub mod numkit;
pub mod probing;
pub mod scoring;
pub mod simulate;

pub use error::{Error, Result};

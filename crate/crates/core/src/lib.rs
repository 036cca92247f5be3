//! Rare-minutia anchored least-squares alignment scoring for latent
//! fingerprint identification, with an evaluation harness (fitting-error
//! densities, score fusion, threshold sweep, CMC curves).

pub mod alignment;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod matcher;
pub mod minutia;

pub use error::{Error, Result};

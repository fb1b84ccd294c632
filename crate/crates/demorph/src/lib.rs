//! Reference-free face demorphing as identity-preserving image decomposition.
//!
//! A decomposer network splits an image into `k` unintelligible components; a
//! merger network weighs and recombines them to reconstruct the input
//! (decomposition mode) or to recover the two bonafides behind a morph
//! (demorphing mode). Includes synthetic data generation, full training, and
//! the biometric/IQA evaluation protocols.

pub mod biometric;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod imaging;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod ops;
pub mod par;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

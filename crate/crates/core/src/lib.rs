//! Training and evaluation toolkit for TriplH, a hyperbolic triplet-loss
//! recommender, together with the baselines it is compared against.
//!
//! The crate is organised around a strategy registry: every model kind
//! (TriplH, TriplE, BPR, MF, LorentzFM, HyperBPR) implements the
//! [`model::RankingModel`] trait and is constructed by name through
//! [`model::ModelRegistry`], so training, evaluation, and the CLI treat all
//! kinds uniformly.

pub mod dataio;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};

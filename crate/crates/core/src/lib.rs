//! Local, instance-level explanations of a black-box binary classifier on
//! tabular data.
//!
//! Three explainers share one pipeline:
//!
//! * **LIME** draws `n` Gaussian points around the instance, weights them with
//!   a feature-space RBF kernel and fits a weighted logistic regression.
//! * **ALIME** draws a pool of `m` Gaussian points, embeds pool and instance
//!   with a denoising autoencoder, keeps the `n` points nearest in latent
//!   space, weights them with `exp(-d)` and fits a weighted logistic
//!   regression.
//! * **tree-ALIME** uses the same neighborhood as ALIME but fits a weighted
//!   CART tree instead.
//!
//! The [`eval`] module measures local fidelity (agreement between the
//! surrogate and the black box at the explained point) and stability
//! (average pairwise Jaccard similarity of the selected feature sets across
//! seeded re-runs).

pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod neuralnet;
pub mod sampler;
pub mod surrogate;

pub use error::{Error, Result};

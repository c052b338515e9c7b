//! Per-keyword occurrence classifiers for privilege keyword search.
//!
//! A keyword search over a review corpus returns every document that hits a
//! term such as `privi*` or `attorney*`. Most of those hits are not
//! privileged. This crate turns each hit into a fixed-width context window,
//! trains a small convolutional classifier per keyword on those windows,
//! cleans noisy positive labels with a nearest-neighbour score, and measures
//! the result as precision at fixed recall and the share of documents that
//! no longer need manual review.
//!
//! Pipeline stages map onto modules:
//!
//! * [`corpus`] loads labelled documents, finds e-mail footers and builds
//!   synthetic corpora.
//! * [`keyword`] tokenizes, matches wildcard patterns and extracts windows.
//! * [`vectorize`] builds vocabularies, fixed-length encodings and
//!   bag-of-words vectors.
//! * [`neural`] is the convolutional occurrence model.
//! * [`baselines`] holds the bag-of-words logistic regression and linear SVM.
//! * [`select`] scores candidate positives against known negatives.
//! * [`evaluate`] computes precision at recall, savings, curves and folds.
//! * [`cli`] wires the stages together behind a run configuration.
//!
//! Numeric code is generic over [`Real`], implemented for `f32` and `f64`.
//! The aliases below pick the precision the command-line pipeline uses.

pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod keyword;
pub mod model_file;
pub mod neural;
pub mod scalar;
pub mod select;
pub mod vectorize;

pub use error::{Error, Result};
pub use scalar::Real;

/// Convolutional occurrence model in single precision (training default).
pub type CnnModel = neural::OccurrenceModel<f32>;
/// Convolutional occurrence model in double precision (gradient checks).
pub type CnnModel64 = neural::OccurrenceModel<f64>;
/// Bag-of-words linear model in double precision.
pub type LinearModel = baselines::LinearModel<f64>;
/// Scored item used by the evaluation harness.
pub type ScoredItem = evaluate::ScoredItem<f64>;

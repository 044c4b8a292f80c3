//! Singer identification from polyphonic recordings: RPCA vocal separation,
//! wavelet denoising, DWT sub-band features, and SVM/GMM classifiers scored by
//! repeated k-fold cross-validation.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod classify;
pub mod error;
pub mod eval;
pub mod features;
pub mod par;
pub mod pipeline;
pub mod rpca;
pub mod spectral;
pub mod stats;
pub mod wavelet;

pub use error::{Error, Result};

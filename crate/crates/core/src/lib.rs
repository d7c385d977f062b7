//! Encoding models for parcel-level fMRI time series.
//!
//! The crate covers the linear side of a multimodal encoding stack (lagged
//! alignment of stimulus features, subsampled PCA, ridge regression with
//! closed-form leave-one-out selection of one penalty per target, and
//! per-parcel stacking of several prediction sets), hidden Markov models
//! with Gaussian and Gaussian-linear emissions fit by variational inference,
//! and Pearson-correlation scoring.

pub mod alignment;
pub mod data;
pub mod dimred;
pub mod error;
pub mod eval;
pub mod hmm;
mod linalg;
pub mod ridge;
pub mod rng;
pub mod stacking;

pub use error::{Error, ErrorClass, Result};

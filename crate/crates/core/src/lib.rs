//! Classifiers as mutual-information estimators.
//!
//! A network trained with (prior-corrected) softmax cross-entropy yields, from
//! its logits alone, pointwise mutual information between inputs and labels.
//! This crate trains such classifiers on Gaussian mixtures, checks their MI
//! read-out against a Monte-Carlo oracle, and uses the PMI decomposition over
//! a GAP network's feature grid (infoCAM, infoCAM+) for weakly supervised
//! localisation.

pub mod cli;
pub mod core_math;
pub mod error;
pub mod infocam;
pub mod losses_mi;
pub mod models;
pub mod synth;
pub mod vision_data;

pub use error::{Error, Result};

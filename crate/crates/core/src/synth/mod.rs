//! Isotropic Gaussian-mixture benchmark with a Monte-Carlo MI oracle.

mod dataset;
mod mixture;

pub use dataset::{LabeledDataset, Split};
pub use mixture::{
    LogDensity, McEstimate, MixtureSpec, OracleReport, BALANCED_PER_CLASS, TABLE_MEANS,
    UNBALANCED_COUNTS,
};

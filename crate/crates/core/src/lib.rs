//! Survey-tabular malnutrition screening toolkit: encoding, synthetic data,
//! feature selection, classic / boosted / neural classifiers, evaluation
//! metrics and a benchmark harness.

// `!(x > 0.0)` checks reject NaN on purpose; index loops are common in the numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod boosting;
pub mod classic;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod preprocess;
pub mod rng;
pub mod select;
pub mod synth;

pub use data::{ColumnKind, Dataset, FoldPlan, MissingPolicy, SplitPlan};
pub use error::{Error, Result};

//! Boosted ensembles.

pub mod adaboost;
pub mod gbdt;

pub use adaboost::{fit_adaboost, stump_alpha, AdaBoostModel, Stump};
pub use gbdt::{bin_edges, bin_of, fit_gbdt, BoostedModel, GbNode, GbTree, GbdtConfig, Growth};

//! Reverse-mode autodiff and the neural classifiers built on it.

pub mod arch;
pub mod graph;
pub mod sparsemax;
pub mod train;

pub use arch::{Arch, BnStats, Param, Store};
pub use graph::{Graph, Tensor, Var};
pub use sparsemax::{sparsemax, sparsemax_masked};
pub use train::{fit_nn, param_gradient_check, tabnet_masks, NnModel, NnParams, TabnetMasks};

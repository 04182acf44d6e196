//! Traditional classifiers.

pub mod forest;
pub mod knn;
pub mod lda;
pub mod logistic;
pub mod svm;
pub mod tree;

pub use forest::{fit_forest, oob_error_path, ForestModel, ForestParams};
pub use knn::{fit_knn, DataRef, KnnModel};
pub use lda::{fit_lda, LdaModel};
pub use logistic::{fit_logreg, fit_logreg_l1, fit_logreg_l1_cv, l1_grid, l1_lambda_max, LogisticModel, LogisticParams};
pub use svm::{fit_platt, fit_svm, Kernel, RffMap, SvmModel, SvmParams};
pub use tree::{fit_tree, TreeModel, TreeNode, TreeParams};

//! Numerical kernels: z-scores, PCA, ridge, L1 logistic regression,
//! extra-trees and K-fold cross-fitting.

pub mod folds;
pub mod forest;
pub mod learner;
pub mod logistic;
pub mod pca;
pub mod ridge;
pub mod stats;

pub use folds::{make_folds, FoldAssignment};
pub use forest::{forest_fit, forest_predict, ForestParams, TreeEnsemble};
pub use learner::{cross_fit, FittedLearner, L1LogisticParams, LearnerSpec, RidgeParams};
pub use logistic::{kkt_violation, l1_logistic_fit, l1_logistic_solve, CvMetric, L1CvResult, LogisticModel};
pub use pca::{fit_pca, PcaModel};
pub use ridge::{ridge_fit, ridge_path, RidgeModel};
pub use stats::{standardize, Standardized};

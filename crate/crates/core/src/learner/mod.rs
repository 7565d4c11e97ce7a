//! Tree ensembles and minority oversampling.
//!
//! [`forest`] is a Gini random forest used for feature ranking, [`gbm`] a
//! second-order gradient-boosted binary classifier used for authentication,
//! and [`smote`] synthesizes minority rows by neighbor interpolation.

pub mod forest;
pub mod gbm;
pub mod smote;
pub mod tree;

pub use forest::{train_rf, ForestConfig, RandomForest};
pub use gbm::{train_gbm, train_gbm_traced, GbmConfig, GbmModel};
pub use smote::{smote, SmoteConfig, SmoteOutput};
pub use tree::TreeNode;

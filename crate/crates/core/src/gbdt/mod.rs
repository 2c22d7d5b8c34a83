//! Gradient-boosted decision trees for binary classification.
//!
//! Logistic loss, second-order leaf values, quantile histogram split
//! finding and LightGBM-style leaf-wise growth capped by `max_leaves`.
//! Training is deterministic for a fixed seed and independent of the
//! rayon thread count.

pub mod binning;
pub mod booster;
pub mod importance;
pub mod tree;

pub use booster::{logloss, sigmoid, train, Dataset, Hyperparams, Model, TrainLog};
pub use importance::{feature_importance, window_level_importance, FeatureImportance, LevelImportance};

//! Per-plot feature assembly and yield regression.
//!
//! Each plot's season is flattened into one design vector (selected dates
//! concatenated in time order) and regressed onto final yield by a small
//! feed-forward network trained with early stopping.

mod features;
mod importance;
mod mlp;
mod tune;

pub use features::{
    assemble_features, concat_selected, design_names, join_yields, per_date_names, DateSelector,
    FeatureRow, YieldRecord, PER_DATE_FEATURES,
};
pub use importance::{permutation_importance, Importance, IMPORTANCE_SHUFFLES};
pub use mlp::{
    fit_predictor, gradient_check, loss_gradient, param_count, predict_yield, train_predictor,
    Hyper, Optimizer, Predictor, Standardizer, TrainHistory,
};
pub use tune::{tune_predictor, HyperSpace, Tuned};

//! Anomaly detection: language-model features, a random forest and a
//! percentile-calibrated decision threshold.

mod detector;
mod features;
mod forest;

pub use detector::{
    calibrate_threshold, decide, nearest_rank, train_detector, DetectorModel, DetectorReport, Verdict,
};
pub use features::{extract_features, FeatureVector};
pub use forest::{train_forest, ForestConfig, Node, RandomForest};

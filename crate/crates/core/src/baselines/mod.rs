//! Frequency baselines (tf-idf with ridge regression or a weighted linear
//! hinge classifier) and the evaluation metrics shared by every model.

mod linear;
mod metrics;
mod selection;
mod tfidf;

pub use linear::{solve_ridge, LinearClassifier, RidgeRegression, Standardizer};
pub use metrics::{classification_metrics, metrics, rank, regression_metrics, spearman, ClassMetrics, MetricsRecord, Prediction};
pub use selection::{backward_selection, cross_validated_rmse};
pub use tfidf::{IdfVariant, SparseVector, TfidfModel};

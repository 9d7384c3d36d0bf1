//! Classical classifiers over extracted features, one model per assay, with
//! majority-vote fusion and the two trust scores.

pub mod forest;
pub mod gbm;
pub mod model;
pub mod svm;
pub mod tree;
pub mod trust;
pub mod vote;

use thiserror::Error;

pub use forest::{fit_random_forest, FeatureSubsample, ForestParams, RandomForest};
pub use gbm::{fit_gbm, Gbm, GbmParams};
pub use model::{ClassifierKind, Decision, EnsembleModel, EnsembleParams, LabelModel};
pub use svm::{fit_linear_svm, LinearSvm, Platt, SvmParams};
pub use tree::{DecisionTree, Node};
pub use trust::{global_confidence, trust_densenet, trust_ml, Standardizer, TrustScore};
pub use vote::{majority_vote, TieBreak};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("label needs samples of both classes (got {positives} positive, {negatives} negative)")]
    SingleClassLabel { positives: usize, negatives: usize },
    #[error("no trained model for label {0}")]
    UntrainedLabel(usize),
    #[error("no voters")]
    NoVoters,
    #[error("need at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error("weights must be non-negative and sum to one")]
    BadWeights,
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("expected {expected} features, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("no samples")]
    EmptyData,
    #[error("samples and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Checks a feature matrix: non-empty, rectangular, finite, matching `y`.
pub(crate) fn check_data(x: &[&[f64]], y: &[bool]) -> Result<usize, EnsembleError> {
    if x.len() != y.len() {
        return Err(EnsembleError::LengthMismatch(x.len(), y.len()));
    }
    let d = x.first().ok_or(EnsembleError::EmptyData)?.len();
    for row in x {
        if row.len() != d {
            return Err(EnsembleError::DimMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EnsembleError::NonFinite);
        }
    }
    Ok(d)
}

/// Requires at least one sample of each class.
pub(crate) fn check_classes(y: &[bool]) -> Result<(usize, usize), EnsembleError> {
    let positives = y.iter().filter(|&&v| v).count();
    let negatives = y.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EnsembleError::SingleClassLabel {
            positives,
            negatives,
        });
    }
    Ok((positives, negatives))
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

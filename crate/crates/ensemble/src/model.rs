//! Per-assay classifier trios with voting and agreement scoring.

use rayon::prelude::*;

use crate::forest::{self, ForestParams, RandomForest};
use crate::gbm::{self, Gbm, GbmParams};
use crate::svm::{fit_linear_svm, LinearSvm, SvmParams};
use crate::tree::Binned;
use crate::trust::trust_ml;
use crate::vote::{majority_vote, TieBreak};
use crate::{check_data, EnsembleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassifierKind {
    Svm,
    Forest,
    Gbm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Svm, ClassifierKind::Forest, ClassifierKind::Gbm];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Forest => "random_forest",
            ClassifierKind::Gbm => "gbm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleParams {
    pub svm: SvmParams,
    pub forest: ForestParams,
    pub gbm: GbmParams,
    /// Weights of (svm, forest, gbm) in the agreement score.
    pub alpha: [f64; 3],
    pub tie: TieBreak,
    pub seed: u64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            svm: SvmParams::default(),
            forest: ForestParams::default(),
            gbm: GbmParams::default(),
            alpha: [1.0 / 3.0; 3],
            tie: TieBreak::Inactive,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelModel {
    pub svm: LinearSvm,
    pub forest: RandomForest,
    pub gbm: Gbm,
}

impl LabelModel {
    /// Positive-class probabilities in [`ClassifierKind::ALL`] order.
    pub fn predict_proba(&self, x: &[f64]) -> [f64; 3] {
        [
            self.svm.predict_proba(x),
            self.forest.predict_proba(x),
            self.gbm.predict_proba(x),
        ]
    }
}

/// Fused outcome for one assay.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub active: bool,
    /// Mean positive-class probability of the voters.
    pub probability: f64,
    /// Weighted probability of the voted class.
    pub trust_ml: f64,
}

/// Majority vote over `(positive probability, weight)` members, each voting
/// active when its probability exceeds one half. Weights are renormalized
/// over the members present.
pub fn fuse(members: &[(f64, f64)], tie: TieBreak) -> Result<Decision, EnsembleError> {
    let votes: Vec<bool> = members.iter().map(|&(p, _)| p > 0.5).collect();
    let active = majority_vote(&votes, tie)?;
    let mut weights: Vec<f64> = members.iter().map(|m| m.1).collect();
    weights.sort_by(f64::total_cmp);
    let weight_sum: f64 = weights.iter().sum();
    if !(weight_sum > 0.0) {
        return Err(EnsembleError::BadWeights);
    }
    let alpha: Vec<f64> = members.iter().map(|m| m.1 / weight_sum).collect();
    let voted: Vec<f64> = members.iter().map(|&(p, _)| if active { p } else { 1.0 - p }).collect();
    let mut probs: Vec<f64> = members.iter().map(|m| m.0).collect();
    probs.sort_by(f64::total_cmp);
    let probability = (probs.iter().sum::<f64>() / probs.len() as f64).clamp(0.0, 1.0);
    Ok(Decision {
        active,
        probability,
        trust_ml: trust_ml(&voted, &alpha)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub n_features: usize,
    /// `None` for labels whose training samples hold a single class.
    pub labels: Vec<Option<LabelModel>>,
    /// Training positive rate per label (0 when no sample has the label).
    pub prevalence: Vec<f64>,
    pub alpha: [f64; 3],
    pub tie: TieBreak,
}

impl EnsembleModel {
    /// Fits one trio per label on the samples where that label is present.
    /// Labels are fitted in parallel; each uses its own derived seeds.
    pub fn fit(x: &[&[f64]], labels: &[Vec<Option<bool>>], params: &EnsembleParams) -> Result<Self, EnsembleError> {
        let n_labels = labels.first().map_or(0, Vec::len);
        let dense: Vec<bool> = vec![false; x.len()];
        let n_features = check_data(x, &dense)?;
        if labels.len() != x.len() {
            return Err(EnsembleError::LengthMismatch(x.len(), labels.len()));
        }
        if let Some(row) = labels.iter().find(|r| r.len() != n_labels) {
            return Err(EnsembleError::LengthMismatch(n_labels, row.len()));
        }
        if params.alpha.iter().any(|a| !a.is_finite() || *a < 0.0)
            || (params.alpha.iter().sum::<f64>() - 1.0).abs() > crate::trust::WEIGHT_TOLERANCE
        {
            return Err(EnsembleError::BadWeights);
        }
        let forest_bins = Binned::new(x, params.forest.max_bins);
        let gbm_bins = (params.gbm.max_bins != params.forest.max_bins).then(|| Binned::new(x, params.gbm.max_bins));
        let gbm_bins = gbm_bins.as_ref().unwrap_or(&forest_bins);

        let fitted: Vec<Result<(Option<LabelModel>, f64), EnsembleError>> = (0..n_labels)
            .into_par_iter()
            .map(|k| {
                let samples: Vec<usize> = (0..x.len()).filter(|&i| labels[i][k].is_some()).collect();
                let y: Vec<bool> = labels.iter().map(|row| row[k] == Some(true)).collect();
                let positives = samples.iter().filter(|&&i| y[i]).count();
                let prevalence = if samples.is_empty() {
                    0.0
                } else {
                    positives as f64 / samples.len() as f64
                };
                let seed = params.seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let rows: Vec<&[f64]> = samples.iter().map(|&i| x[i]).collect();
                let sub_y: Vec<bool> = samples.iter().map(|&i| y[i]).collect();
                let svm = match fit_linear_svm(&rows, &sub_y, &SvmParams { seed, ..params.svm.clone() }) {
                    Ok(m) => m,
                    Err(EnsembleError::SingleClassLabel { .. }) | Err(EnsembleError::EmptyData) => {
                        return Ok((None, prevalence))
                    }
                    Err(e) => return Err(e),
                };
                let forest = forest::fit_binned(&forest_bins, &samples, &y, &ForestParams { seed, ..params.forest.clone() })?;
                let (gbm, _) = gbm::fit_binned(gbm_bins, &samples, &y, &params.gbm)?;
                Ok((Some(LabelModel { svm, forest, gbm }), prevalence))
            })
            .collect();
        let mut models = Vec::with_capacity(n_labels);
        let mut prevalence = Vec::with_capacity(n_labels);
        for f in fitted {
            let (m, p) = f?;
            models.push(m);
            prevalence.push(p);
        }
        Ok(EnsembleModel {
            n_features,
            labels: models,
            prevalence,
            alpha: params.alpha,
            tie: params.tie,
        })
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn is_trained(&self, label: usize) -> bool {
        self.labels.get(label).is_some_and(Option::is_some)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), EnsembleError> {
        if x.len() != self.n_features {
            return Err(EnsembleError::DimMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EnsembleError::NonFinite);
        }
        Ok(())
    }

    /// (svm, forest, gbm) positive-class probabilities for one label.
    pub fn predict_label(&self, label: usize, x: &[f64]) -> Result<[f64; 3], EnsembleError> {
        self.check_input(x)?;
        let model = self
            .labels
            .get(label)
            .and_then(Option::as_ref)
            .ok_or(EnsembleError::UntrainedLabel(label))?;
        Ok(model.predict_proba(x))
    }

    /// Probabilities for every label; fails on the first untrained one.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<[f64; 3]>, EnsembleError> {
        (0..self.n_labels()).map(|k| self.predict_label(k, x)).collect()
    }

    pub fn decide(&self, label: usize, x: &[f64]) -> Result<Decision, EnsembleError> {
        let p = self.predict_label(label, x)?;
        let members: Vec<(f64, f64)> = p.iter().copied().zip(self.alpha).collect();
        fuse(&members, self.tie)
    }
}

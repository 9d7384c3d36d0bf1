//! Prediction reports and their text and JSON renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssayPrediction {
    pub assay: String,
    pub active: bool,
    /// Mean positive-class probability over the voters; the training
    /// prevalence when the assay had no trainable classifiers.
    pub probability: f64,
    /// False when the assay fell back to its prevalence.
    pub trained: bool,
    pub svm: Option<f64>,
    pub random_forest: Option<f64>,
    pub gbm: Option<f64>,
    /// Weighted agreement of the classifiers with the verdict.
    pub trust_ml: Option<f64>,
    pub heatmap: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub smiles: String,
    pub assays: Vec<AssayPrediction>,
    pub trust_densenet: f64,
    /// Mean of the per-assay agreement over trained assays.
    pub trust_ml: f64,
    pub global_confidence: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl PredictionReport {
    /// One `key: value` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "smiles: {}", self.smiles);
        for a in &self.assays {
            let _ = writeln!(
                s,
                "{}: {} p={:.6} svm={} random_forest={} gbm={} trust_ml={}{}{}",
                a.assay,
                if a.active { "active" } else { "inactive" },
                a.probability,
                opt(a.svm),
                opt(a.random_forest),
                opt(a.gbm),
                opt(a.trust_ml),
                if a.trained { "" } else { " untrained" },
                a.heatmap.as_ref().map(|h| format!(" heatmap={h}")).unwrap_or_default(),
            );
        }
        let _ = writeln!(s, "trust_densenet: {:.6}", self.trust_densenet);
        let _ = writeln!(s, "trust_ml: {:.6}", self.trust_ml);
        let _ = writeln!(s, "global_confidence: {:.6}", self.global_confidence);
        s
    }

    /// Single-line JSON record.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report fields are plain data")
    }

    /// Schema check: twelve assays and every probability and confidence in
    /// [0, 1].
    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        self.assays.len() == crate::assays::N_ASSAYS
            && self.assays.iter().zip(crate::assays::ASSAYS).all(|(a, name)| {
                a.assay == name
                    && unit(a.probability)
                    && [a.svm, a.random_forest, a.gbm, a.trust_ml].iter().flatten().all(|&v| unit(v))
            })
            && unit(self.trust_densenet)
            && unit(self.trust_ml)
            && unit(self.global_confidence)
    }
}

//! Per-assay classification metrics.

use thiserror::Error;

use crate::assays::ASSAYS;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no evaluable records for assay {}", ASSAYS[*.0])]
    NoEvaluableRecords(usize),
    #[error("{0} predictions for {1} labels")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssayMetrics {
    pub assay: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// `None` when the evaluated records hold only one class.
    pub auc: Option<f64>,
    pub support: usize,
    pub positives: usize,
}

/// Area under the ROC curve as the Mann-Whitney statistic, with tied scores
/// sharing their average rank.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j averaged.
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * order[i..j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn accuracy(predicted: &[bool], truth: &[bool]) -> f64 {
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    correct as f64 / truth.len() as f64
}

/// Mean of the per-class recalls over the classes present.
pub fn balanced_accuracy(predicted: &[bool], truth: &[bool]) -> f64 {
    let mut hit = [0usize; 2];
    let mut total = [0usize; 2];
    for (&p, &t) in predicted.iter().zip(truth) {
        total[usize::from(t)] += 1;
        hit[usize::from(t)] += usize::from(p == t);
    }
    let recalls: Vec<f64> = (0..2)
        .filter(|&c| total[c] > 0)
        .map(|c| hit[c] as f64 / total[c] as f64)
        .collect();
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

/// Metrics for one assay from verdicts, ranking scores and true labels of
/// the records where that label is present.
pub fn assay_metrics(assay: usize, verdicts: &[bool], scores: &[f64], truth: &[bool]) -> Result<AssayMetrics, MetricsError> {
    if verdicts.len() != truth.len() || scores.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(verdicts.len().max(scores.len()), truth.len()));
    }
    if truth.is_empty() {
        return Err(MetricsError::NoEvaluableRecords(assay));
    }
    Ok(AssayMetrics {
        assay,
        accuracy: accuracy(verdicts, truth),
        balanced_accuracy: balanced_accuracy(verdicts, truth),
        auc: roc_auc(scores, truth),
        support: truth.len(),
        positives: truth.iter().filter(|&&t| t).count(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroMetrics {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// Mean over the assays where AUC is defined.
    pub auc: Option<f64>,
    pub support: usize,
}

pub fn macro_average(rows: &[AssayMetrics]) -> Option<MacroMetrics> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc).collect();
    Some(MacroMetrics {
        accuracy: rows.iter().map(|r| r.accuracy).sum::<f64>() / n,
        balanced_accuracy: rows.iter().map(|r| r.balanced_accuracy).sum::<f64>() / n,
        auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        support: rows.iter().map(|r| r.support).sum(),
    })
}

fn fmt_auc(auc: Option<f64>) -> String {
    auc.map_or_else(|| "NA".to_string(), |a| format!("{a:.6}"))
}

/// `assay,accuracy,balanced_accuracy,auc,support` with a trailing macro row.
pub fn metrics_csv(rows: &[AssayMetrics]) -> String {
    let mut out = String::from("assay,accuracy,balanced_accuracy,auc,support\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{}\n",
            ASSAYS[r.assay],
            r.accuracy,
            r.balanced_accuracy,
            fmt_auc(r.auc),
            r.support
        ));
    }
    if let Some(m) = macro_average(rows) {
        out.push_str(&format!(
            "macro,{:.6},{:.6},{},{}\n",
            m.accuracy,
            m.balanced_accuracy,
            fmt_auc(m.auc),
            m.support
        ));
    }
    out
}

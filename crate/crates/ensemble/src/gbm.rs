//! Newton boosting of regression trees on the logistic loss.

use crate::tree::{Binned, DecisionTree, Grower, Newton};
use crate::{check_classes, check_data, sigmoid, EnsembleError};

/// Halvings tried when a round would raise the training loss.
const MAX_BACKTRACK: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct GbmParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    /// Initial log-odds; `None` uses the training prevalence.
    pub base_score: Option<f64>,
    pub max_bins: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            n_rounds: 200,
            max_depth: 4,
            learning_rate: 0.1,
            lambda: 1.0,
            base_score: None,
            max_bins: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gbm {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<DecisionTree>,
    /// Step applied to each tree: the learning rate, halved whenever the
    /// full step would have increased the training loss.
    pub shrinkage: Vec<f64>,
}

impl Gbm {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .zip(&self.shrinkage)
            .fold(self.base_score, |acc, (t, &s)| acc + s * t.predict(x))
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.score(x))
    }
}

pub fn fit_gbm(x: &[&[f64]], y: &[bool], params: &GbmParams) -> Result<Gbm, EnsembleError> {
    fit_gbm_with_history(x, y, params).map(|(m, _)| m)
}

/// Also returns the mean training log-loss before the first round and after
/// every round.
pub fn fit_gbm_with_history(x: &[&[f64]], y: &[bool], params: &GbmParams) -> Result<(Gbm, Vec<f64>), EnsembleError> {
    check_data(x, y)?;
    let binned = Binned::new(x, params.max_bins);
    let samples: Vec<usize> = (0..x.len()).collect();
    fit_binned(&binned, &samples, y, params)
}

pub(crate) fn fit_binned(
    binned: &Binned,
    samples: &[usize],
    y: &[bool],
    params: &GbmParams,
) -> Result<(Gbm, Vec<f64>), EnsembleError> {
    let labels: Vec<bool> = samples.iter().map(|&s| y[s]).collect();
    let (positives, _) = check_classes(&labels)?;
    let base_score = params.base_score.unwrap_or_else(|| {
        let p = positives as f64 / samples.len() as f64;
        (p / (1.0 - p)).ln()
    });
    let n = y.len();
    let mut score = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut history = vec![log_loss(samples, y, &score)];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut shrinkage = Vec::with_capacity(params.n_rounds);
    let mut work = samples.to_vec();
    let mut trial = score.clone();
    for _ in 0..params.n_rounds {
        for &s in samples {
            let p = sigmoid(score[s]);
            grad[s] = p - if y[s] { 1.0 } else { 0.0 };
            hess[s] = p * (1.0 - p);
        }
        let criterion = Newton {
            grad: &grad,
            hess: &hess,
            lambda: params.lambda,
        };
        let grower = Grower {
            binned,
            criterion: &criterion,
            max_depth: Some(params.max_depth),
            max_features: binned.n_features(),
        };
        work.copy_from_slice(samples);
        let tree = grower.grow(&mut work, None);
        let leaf: Vec<f64> = samples.iter().map(|&s| tree_value(&tree, binned, s)).collect();
        let previous = *history.last().expect("history starts non-empty");
        let mut step = params.learning_rate;
        let mut loss;
        let mut tries = 0;
        loop {
            for (&s, v) in samples.iter().zip(&leaf) {
                trial[s] = score[s] + step * v;
            }
            loss = log_loss(samples, y, &trial);
            if loss <= previous {
                break;
            }
            tries += 1;
            if tries > MAX_BACKTRACK {
                step = 0.0;
                loss = previous;
                break;
            }
            step /= 2.0;
        }
        if step != 0.0 {
            for &s in samples {
                score[s] = trial[s];
            }
        }
        history.push(loss);
        trees.push(tree);
        shrinkage.push(step);
    }
    Ok((
        Gbm {
            base_score,
            learning_rate: params.learning_rate,
            trees,
            shrinkage,
        },
        history,
    ))
}

/// Leaf value reached by a training sample, using its bins rather than raw
/// values (identical by construction of the thresholds).
fn tree_value(tree: &DecisionTree, binned: &Binned, s: usize) -> f64 {
    use crate::tree::Node;
    let mut i = 0;
    loop {
        match tree.nodes[i] {
            Node::Leaf { value } => return value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let cut = binned.cuts[feature].partition_point(|&c| c < threshold);
                i = if binned.bins[feature][s] as usize <= cut { left } else { right };
            }
        }
    }
}

/// Mean logistic loss `log(1 + e^f) - y·f`.
fn log_loss(samples: &[usize], y: &[bool], score: &[f64]) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|&s| {
            let f = score[s];
            let softplus = f.max(0.0) + (-f.abs()).exp().ln_1p();
            softplus - if y[s] { f } else { 0.0 }
        })
        .sum();
    total / samples.len() as f64
}

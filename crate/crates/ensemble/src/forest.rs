use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::tree::{Binned, DecisionTree, Gini, Grower};
use crate::{check_classes, check_data, EnsembleError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureSubsample {
    All,
    Sqrt,
    Count(usize),
}

impl FeatureSubsample {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            FeatureSubsample::All => d,
            FeatureSubsample::Sqrt => ((d as f64).sqrt().round() as usize).max(1),
            FeatureSubsample::Count(n) => n.clamp(1, d.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub max_features: FeatureSubsample,
    pub bootstrap: bool,
    pub max_bins: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: Some(12),
            max_features: FeatureSubsample::Sqrt,
            bootstrap: true,
            max_bins: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Fraction of trees whose leaf is majority positive.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.predict(x) > 0.5).count();
        votes as f64 / self.trees.len() as f64
    }
}

pub fn fit_random_forest(x: &[&[f64]], y: &[bool], params: &ForestParams) -> Result<RandomForest, EnsembleError> {
    check_data(x, y)?;
    let binned = Binned::new(x, params.max_bins);
    let samples: Vec<usize> = (0..x.len()).collect();
    fit_binned(&binned, &samples, y, params)
}

/// Fits on the `samples` subset of a pre-binned matrix; `y` is indexed by
/// sample id.
pub(crate) fn fit_binned(
    binned: &Binned,
    samples: &[usize],
    y: &[bool],
    params: &ForestParams,
) -> Result<RandomForest, EnsembleError> {
    let labels: Vec<bool> = samples.iter().map(|&s| y[s]).collect();
    check_classes(&labels)?;
    if params.n_trees == 0 {
        return Err(EnsembleError::EmptyData);
    }
    let max_features = params.max_features.resolve(binned.n_features());
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let (mut chosen, weights) = if params.bootstrap {
                let mut counts = vec![0.0; y.len()];
                for _ in 0..samples.len() {
                    counts[samples[rng.random_range(0..samples.len())]] += 1.0;
                }
                let chosen: Vec<usize> = samples.iter().copied().filter(|&s| counts[s] > 0.0).collect();
                (chosen, Some(counts))
            } else {
                (samples.to_vec(), None)
            };
            let criterion = Gini {
                y,
                weights: weights.as_deref(),
            };
            let grower = Grower {
                binned,
                criterion: &criterion,
                max_depth: params.max_depth,
                max_features,
            };
            let use_rng = max_features < binned.n_features();
            grower.grow(&mut chosen, use_rng.then_some(&mut rng))
        })
        .collect();
    Ok(RandomForest { trees })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_sizes() {
        assert_eq!(FeatureSubsample::Sqrt.resolve(40), 6);
        assert_eq!(FeatureSubsample::Sqrt.resolve(2048), 45);
        assert_eq!(FeatureSubsample::All.resolve(7), 7);
        assert_eq!(FeatureSubsample::Count(100).resolve(7), 7);
    }

    #[test]
    fn seeded_forests_are_reproducible() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, (i % 5) as f64, i as f64]).collect();
        let y: Vec<bool> = (0..60).map(|i| (i % 7) + (i % 5) > 5).collect();
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let params = ForestParams {
            n_trees: 10,
            max_features: FeatureSubsample::Count(1),
            seed: 3,
            ..ForestParams::default()
        };
        let a = fit_random_forest(&rows, &y, &params).unwrap();
        assert_eq!(a, fit_random_forest(&rows, &y, &params).unwrap());
        let b = fit_random_forest(&rows, &y, &ForestParams { seed: 4, ..params }).unwrap();
        assert_ne!(a, b);
    }
}

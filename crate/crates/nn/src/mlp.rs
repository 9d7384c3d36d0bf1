//! Two-layer perceptron on fixed-length feature vectors, trained with the
//! same masked multi-label loss as the image network.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layers::{Binder, Linear, Module};
use crate::scalar::Scalar;
use crate::tape::{sigmoid, Tape, Var};
use crate::tensor::Tensor;
use crate::train::{store_grads, Sgd, TrainConfig};
use crate::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub hidden: Linear<T>,
    pub output: Linear<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn new(in_dim: usize, hidden: usize, outputs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp {
            hidden: Linear::new(hidden, in_dim, &mut rng),
            output: Linear::new(outputs, hidden, &mut rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, bind: &mut Binder) -> Result<Var, NnError> {
        let h = self.hidden.forward(tape, x, bind)?;
        let h = tape.relu(h);
        self.output.forward(tape, h, bind)
    }

    fn batch(&self, rows: &[&[T]]) -> Result<Tensor<T>, NnError> {
        let d = self.hidden.in_dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(NnError::ShapeMismatch(format!("feature length {} != {d}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Tensor::new(&[rows.len(), d], data)
    }

    /// Masked BCE training; `labels` and `mask` are row-major (N, outputs).
    pub fn fit(
        &mut self,
        features: &[Vec<T>],
        labels: &[Vec<T>],
        mask: &[Vec<bool>],
        cfg: &TrainConfig,
    ) -> Result<Vec<f64>, NnError> {
        if features.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum);
        let mut order: Vec<usize> = (0..features.len()).collect();
        let mut history = Vec::new();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let (mut total, mut observed) = (0.0, 0usize);
            for chunk in order.chunks(cfg.batch_size.max(1)) {
                let rows: Vec<&[T]> = chunk.iter().map(|&i| features[i].as_slice()).collect();
                let targets: Vec<T> = chunk.iter().flat_map(|&i| labels[i].iter().copied()).collect();
                let m: Vec<bool> = chunk.iter().flat_map(|&i| mask[i].iter().copied()).collect();
                let mut tape = Tape::new();
                let x = tape.constant(self.batch(&rows)?);
                let mut bind = Binder::new(true);
                let logits = self.forward(&mut tape, x, &mut bind)?;
                let loss = tape.masked_bce(logits, &targets, &m)?;
                let grads = tape.backward(loss)?;
                store_grads(self, &bind, &grads);
                opt.step(self.params_mut());
                let count = m.iter().filter(|&&v| v).count();
                total += tape.value(loss).data[0].f64() * count as f64;
                observed += count;
            }
            history.push(if observed == 0 { 0.0 } else { total / observed as f64 });
        }
        Ok(history)
    }

    pub fn predict_proba(&self, features: &[Vec<T>]) -> Result<Vec<Vec<f64>>, NnError> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        let rows: Vec<&[T]> = features.iter().map(Vec::as_slice).collect();
        let mut tape = Tape::new();
        let x = tape.constant(self.batch(&rows)?);
        let mut bind = Binder::new(false);
        let logits = self.forward(&mut tape, x, &mut bind)?;
        let k = self.output.out_dim();
        Ok(tape
            .value(logits)
            .data
            .chunks(k)
            .map(|r| r.iter().map(|&z| sigmoid(z).f64()).collect())
            .collect())
    }
}

impl<T: Scalar> Module<T> for Mlp<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        [self.hidden.params(), self.output.params()].concat()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = self.hidden.params_mut();
        v.extend(self.output.params_mut());
        v
    }
    fn state(&self) -> Vec<&Tensor<T>> {
        self.params()
    }
    fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_a_separable_rule() {
        // Label 0 is feature 0; label 1 is missing everywhere.
        let features: Vec<Vec<f64>> = (0..32).map(|i| vec![f64::from(i % 2), f64::from((i / 2) % 2), 1.0]).collect();
        let labels: Vec<Vec<f64>> = features.iter().map(|f| vec![f[0], 0.0]).collect();
        let mask = vec![vec![true, false]; 32];
        let mut mlp = Mlp::<f64>::new(3, 8, 2, 5);
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 8,
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let history = mlp.fit(&features, &labels, &mask, &cfg).unwrap();
        assert!(history.last().unwrap() < &0.05, "{:?}", history.last());
        let p = mlp.predict_proba(&features[..2]).unwrap();
        assert!(p[0][0] < 0.2 && p[1][0] > 0.8);
    }
}

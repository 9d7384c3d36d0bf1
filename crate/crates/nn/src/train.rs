use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use toxpipe_core::depict::StructImage;

use crate::densenet::{image_batch, DenseNet};
use crate::layers::{Binder, Module};
use crate::scalar::Scalar;
use crate::tape::{Gradients, Tape};
use crate::tensor::Tensor;
use crate::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// An image with per-assay targets; `mask[k]` is false where label `k` is
/// missing.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: StructImage,
    pub labels: Vec<f32>,
    pub mask: Vec<bool>,
}

/// SGD with classical momentum: `v = μv + g; p -= lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Sgd {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        }
    }

    /// Applies each parameter's stored gradient. Parameters without a
    /// gradient buffer are left alone.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>) {
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        }
        let (lr, mu) = (T::of(self.learning_rate), T::of(self.momentum));
        for (p, v) in params.into_iter().zip(&mut self.velocity) {
            let Some(g) = &p.grad else { continue };
            for ((x, vi), &gi) in p.data.iter_mut().zip(v.iter_mut()).zip(g) {
                *vi = mu * *vi + gi;
                *x = *x - lr * *vi;
            }
        }
    }
}

/// Copies gradients from a backward pass into each parameter's buffer.
pub fn store_grads<T: Scalar, M: Module<T>>(model: &mut M, bind: &Binder, grads: &Gradients<T>) {
    for (p, &v) in model.params_mut().into_iter().zip(&bind.vars) {
        p.grad = Some(grads.get_or_zero(v, p.len()));
    }
}

/// One optimizer step on a mini-batch. Returns the masked mean loss and the
/// number of observed labels it averaged over.
pub fn train_step<T: Scalar>(
    net: &mut DenseNet<T>,
    batch: &[&LabeledImage],
    opt: &mut Sgd<T>,
) -> Result<(f64, usize), NnError> {
    let outputs = net.config.num_outputs;
    let images: Vec<&StructImage> = batch.iter().map(|e| &e.image).collect();
    let mut targets = Vec::with_capacity(batch.len() * outputs);
    let mut mask = Vec::with_capacity(batch.len() * outputs);
    for e in batch {
        if e.labels.len() != outputs || e.mask.len() != outputs {
            return Err(NnError::ShapeMismatch(format!(
                "example has {} labels, network predicts {outputs}",
                e.labels.len()
            )));
        }
        targets.extend(e.labels.iter().map(|&v| T::of(f64::from(v))));
        mask.extend_from_slice(&e.mask);
    }
    let mut tape = Tape::new();
    let input = tape.constant(image_batch(&images, net.config.input_size)?);
    let mut bind = Binder::new(true);
    let pass = net.forward(&mut tape, input, &mut bind)?;
    let logits = pass.logits.ok_or(NnError::UntrainedHead)?;
    let loss = tape.masked_bce(logits, &targets, &mask)?;
    let grads = tape.backward(loss)?;
    store_grads(net, &bind, &grads);
    opt.step(net.params_mut());
    net.absorb_stats(&mut bind.batch_stats.iter());
    let count = mask.iter().filter(|&&m| m).count();
    Ok((tape.value(loss).data[0].f64(), count))
}

/// Mini-batch training of the network and its head on masked binary
/// cross-entropy, followed by one pass over the data that refreshes the
/// batch-norm running statistics. Returns the per-epoch loss, averaged over
/// observed labels.
pub fn train<T: Scalar>(
    net: &mut DenseNet<T>,
    data: &[LabeledImage],
    cfg: &TrainConfig,
) -> Result<Vec<f64>, NnError> {
    train_with(net, data, cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, loss)` after each epoch.
pub fn train_with<T: Scalar>(
    net: &mut DenseNet<T>,
    data: &[LabeledImage],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>, NnError> {
    train_from(
        net,
        data.len(),
        cfg,
        |idx: &[usize]| Ok::<_, NnError>(idx.iter().map(|&i| data[i].clone()).collect()),
        on_epoch,
    )
}

/// Training over `n` examples materialized one mini-batch at a time by
/// `load`, which receives the example indices of the batch in order.
/// Visits batches exactly as [`train`] does for the same seed.
pub fn train_from<T: Scalar, E: From<NnError>>(
    net: &mut DenseNet<T>,
    n: usize,
    cfg: &TrainConfig,
    mut load: impl FnMut(&[usize]) -> Result<Vec<LabeledImage>, E>,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>, E> {
    if n == 0 {
        return Err(NnError::EmptyDataset.into());
    }
    if net.head.is_none() {
        return Err(NnError::UntrainedHead.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut observed) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let examples = load(chunk)?;
            let batch: Vec<&LabeledImage> = examples.iter().collect();
            let (loss, count) = train_step(net, &batch, &mut opt)?;
            total += loss * count as f64;
            observed += count;
        }
        let epoch_loss = if observed == 0 { 0.0 } else { total / observed as f64 };
        on_epoch(epoch, epoch_loss);
        history.push(epoch_loss);
    }
    // The moving averages trail the weights by the last few dozen steps,
    // which at high learning rates leaves inference badly miscalibrated.
    if cfg.epochs > 0 {
        for (k, chunk) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let examples = load(chunk)?;
            let images: Vec<&StructImage> = examples.iter().map(|e| &e.image).collect();
            refresh_running_stats(net, &images, k)?;
        }
    }
    Ok(history)
}

/// Folds batch `k` of a refresh pass into every batch norm's running
/// statistics so that after batches `0..=k` they hold the equal-weight
/// average of those batches' statistics. Weights are left untouched.
pub fn refresh_running_stats<T: Scalar>(net: &mut DenseNet<T>, images: &[&StructImage], k: usize) -> Result<(), NnError> {
    let mut tape = Tape::new();
    let input = tape.constant(image_batch(images, net.config.input_size)?);
    let mut bind = Binder::new(true);
    net.forward(&mut tape, input, &mut bind)?;
    let saved: Vec<f64> = net.batch_norms_mut().iter().map(|bn| bn.momentum).collect();
    for bn in net.batch_norms_mut() {
        bn.momentum = 1.0 / (k + 1) as f64;
    }
    net.absorb_stats(&mut bind.batch_stats.iter());
    for (bn, m) in net.batch_norms_mut().into_iter().zip(saved) {
        bn.momentum = m;
    }
    Ok(())
}

use rand::Rng;

use crate::scalar::Scalar;
use crate::tape::{BnMode, Tape, Var};
use crate::tensor::Tensor;
use crate::NnError;

/// Per-channel `(mean, biased variance)` of one training-mode batch norm and
/// the number of values each channel was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub count: usize,
    pub channels: Vec<(f64, f64)>,
}

/// Collects the tape handles of parameters as a forward pass binds them, in
/// the same order as [`Module::params`].
#[derive(Debug, Default)]
pub struct Binder {
    pub vars: Vec<Var>,
    /// Batch statistics of every training-mode batch norm, in call order.
    pub batch_stats: Vec<BatchStats>,
    pub training: bool,
}

impl Binder {
    pub fn new(training: bool) -> Self {
        Binder {
            vars: Vec::new(),
            batch_stats: Vec::new(),
            training,
        }
    }

    pub fn param<T: Scalar>(&mut self, tape: &mut Tape<T>, t: &Tensor<T>) -> Var {
        let v = tape.leaf(t);
        self.vars.push(v);
        v
    }
}

pub trait Module<T: Scalar> {
    /// Trainable tensors in binding order.
    fn params(&self) -> Vec<&Tensor<T>>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;
    /// Trainable tensors followed by non-trainable buffers.
    fn state(&self) -> Vec<&Tensor<T>>;
    fn state_mut(&mut self) -> Vec<&mut Tensor<T>>;
    /// Folds training-mode batch statistics into running buffers, consuming
    /// them in call order.
    fn absorb_stats(&mut self, _stats: &mut std::slice::Iter<'_, BatchStats>) {}
}

/// Convolution without bias; kernels have shape (out, in, k, k).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub kernels: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> ConvLayer<T> {
    /// He-normal initialization.
    pub fn new<R: Rng + ?Sized>(
        out_ch: usize,
        in_ch: usize,
        k: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if k.is_multiple_of(2) || stride == 0 {
            return Err(NnError::ShapeMismatch(format!(
                "kernel size {k} must be odd and stride {stride} positive"
            )));
        }
        let fan_in = (in_ch * k * k) as f64;
        Ok(ConvLayer {
            kernels: Tensor::randn(&[out_ch, in_ch, k, k], (2.0 / fan_in).sqrt(), rng),
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape[0]
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, bind: &mut Binder) -> Result<Var, NnError> {
        let w = bind.param(tape, &self.kernels);
        tape.conv2d(x, w, self.stride, self.padding)
    }
}

impl<T: Scalar> Module<T> for ConvLayer<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.kernels]
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.kernels]
    }
    fn state(&self) -> Vec<&Tensor<T>> {
        self.params()
    }
    fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.params_mut()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
}

impl<T: Scalar> BatchNormLayer<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormLayer {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, bind: &mut Binder) -> Result<Var, NnError> {
        let gamma = bind.param(tape, &self.gamma);
        let beta = bind.param(tape, &self.beta);
        let mode = if bind.training {
            BnMode::Train { eps: self.eps }
        } else {
            BnMode::Eval {
                mean: &self.running_mean.data,
                var: &self.running_var.data,
                eps: self.eps,
            }
        };
        let [n, _, h, w] = tape.value(x).dims4()?;
        let (y, stats) = tape.batch_norm(x, gamma, beta, mode)?;
        if let Some(channels) = stats {
            bind.batch_stats.push(BatchStats {
                count: n * h * w,
                channels,
            });
        }
        Ok(y)
    }

    /// Exponential moving average of the batch mean and of the unbiased batch
    /// variance; `count` is the number of values per channel.
    pub fn update_running(&mut self, stats: &[(f64, f64)], count: usize) {
        let m = self.momentum;
        let correction = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
        for (c, &(mean, var)) in stats.iter().enumerate() {
            let rm = self.running_mean.data[c].f64();
            let rv = self.running_var.data[c].f64();
            self.running_mean.data[c] = T::of((1.0 - m) * rm + m * mean);
            self.running_var.data[c] = T::of((1.0 - m) * rv + m * var * correction);
        }
    }
}

impl<T: Scalar> Module<T> for BatchNormLayer<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.gamma, &self.beta]
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
    fn state(&self) -> Vec<&Tensor<T>> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }
    fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }
    fn absorb_stats(&mut self, stats: &mut std::slice::Iter<'_, BatchStats>) {
        if let Some(s) = stats.next() {
            self.update_running(&s.channels, s.count);
        }
    }
}

/// Affine layer `y = W x + b`, weight shape (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    /// Uniform in ±1/sqrt(in) for weights, zero bias.
    pub fn new<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let data = (0..out_dim * in_dim)
            .map(|_| T::of(rng.random_range(-bound..=bound)))
            .collect();
        Linear {
            weight: Tensor {
                shape: vec![out_dim, in_dim],
                data,
                grad: None,
            },
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, bind: &mut Binder) -> Result<Var, NnError> {
        let w = bind.param(tape, &self.weight);
        let b = bind.param(tape, &self.bias);
        tape.linear(x, w, b)
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
    fn state(&self) -> Vec<&Tensor<T>> {
        self.params()
    }
    fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.params_mut()
    }
}

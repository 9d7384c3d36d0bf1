//! Define-by-run reverse-mode differentiation.
//!
//! Every operation appends a node holding its output and whatever the
//! backward pass needs. [`Tape::backward`] walks the nodes in reverse and
//! returns a gradient for every node that the root depends on.

use rayon::prelude::*;

use crate::ops::{self, ConvGeom};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::NnError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Statistics source for batch normalization.
#[derive(Debug, Clone, Copy)]
pub enum BnMode<'a, T> {
    /// Normalize with the batch's own mean and biased variance.
    Train { eps: f64 },
    /// Normalize with stored running statistics.
    Eval {
        mean: &'a [T],
        var: &'a [T],
        eps: f64,
    },
}

enum Op<T> {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        geom: ConvGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        training: bool,
    },
    Relu {
        x: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    AvgPool2 {
        x: Var,
    },
    MaxPool {
        x: Var,
        arg: Vec<u32>,
    },
    Gap {
        x: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    MaskedBce {
        logits: Var,
        targets: Vec<T>,
        mask: Vec<bool>,
        count: usize,
    },
    WeightedSum {
        x: Var,
        weights: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    /// Whether any trainable leaf feeds this node.
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the root with respect to `v`, or `None` if the root does
    /// not depend on it.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Like [`Gradients::get`] but zeros for unreached nodes.
    pub fn get_or_zero(&self, v: Var, len: usize) -> Vec<T> {
        self.get(v).map_or_else(|| vec![T::zero(); len], <[T]>::to_vec)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let needs_grad = match &op {
            Op::Leaf => true,
            _ => self.inputs(&op).iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn inputs(&self, op: &Op<T>) -> Vec<Var> {
        match op {
            Op::Leaf => Vec::new(),
            Op::Conv { x, w, .. } => vec![*x, *w],
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Relu { x } | Op::AvgPool2 { x } | Op::MaxPool { x, .. } | Op::Gap { x } => vec![*x],
            Op::Concat { parts } => parts.clone(),
            Op::Linear { x, w, b } => vec![*x, *w, *b],
            Op::MaskedBce { logits, .. } => vec![*logits],
            Op::WeightedSum { x, .. } => vec![*x],
        }
    }

    /// Records a differentiable leaf (a parameter, or an input whose
    /// gradient is wanted). The gradient buffer is not copied.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        let value = Tensor {
            shape: t.shape.clone(),
            data: t.data.clone(),
            grad: None,
        };
        self.push(value, Op::Leaf)
    }

    /// Records a constant leaf; no gradient is computed for it or for
    /// anything that depends only on constants.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        let value = Tensor { grad: None, ..t };
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var, NnError> {
        let [n, c, h, wd] = self.value(x).dims4()?;
        let [co, ci, kh, kw] = self.value(w).dims4()?;
        if ci != c {
            return Err(NnError::ShapeMismatch(format!(
                "conv expects {ci} input channels, got {c}"
            )));
        }
        if stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(NnError::ShapeMismatch(format!(
                "kernel {kh}x{kw} does not fit a {h}x{wd} map with padding {pad}"
            )));
        }
        let geom = ConvGeom {
            batch: n,
            in_ch: c,
            h,
            w: wd,
            out_ch: co,
            kh,
            kw,
            stride,
            pad,
        };
        let data = ops::conv2d_forward(&self.value(x).data, &self.value(w).data, &geom);
        let out = Tensor::new(&[n, co, geom.out_h(), geom.out_w()], data)?;
        Ok(self.push(out, Op::Conv { x, w, geom }))
    }

    /// Returns the output and, in training mode, the per-channel batch mean
    /// and biased variance used for it.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode<'_, T>,
    ) -> Result<(Var, Option<Vec<(f64, f64)>>), NnError> {
        let [n, c, h, w] = self.value(x).dims4()?;
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(NnError::ShapeMismatch(format!(
                "batch norm over {c} channels with {} scales",
                self.value(gamma).len()
            )));
        }
        let hw = h * w;
        let (stats, training, eps) = match mode {
            BnMode::Train { eps } => {
                if n * hw < 2 {
                    return Err(NnError::DegenerateBatch);
                }
                (ops::channel_stats(&self.value(x).data, n, c, hw), true, eps)
            }
            BnMode::Eval { mean, var, eps } => {
                if mean.len() != c || var.len() != c {
                    return Err(NnError::ShapeMismatch("running statistics length".into()));
                }
                let s = mean.iter().zip(var).map(|(m, v)| (m.f64(), v.f64())).collect();
                (s, false, eps)
            }
        };
        let inv_std: Vec<T> = stats.iter().map(|&(_, v)| T::of(1.0 / (v + eps).sqrt())).collect();
        let mean: Vec<T> = stats.iter().map(|&(m, _)| T::of(m)).collect();
        let (g, bta) = (&self.value(gamma).data, &self.value(beta).data);
        let xs = &self.value(x).data;
        let mut xhat = vec![T::zero(); xs.len()];
        let mut y = vec![T::zero(); xs.len()];
        xhat.par_chunks_mut(hw.max(1))
            .zip(y.par_chunks_mut(hw.max(1)))
            .enumerate()
            .for_each(|(plane, (xh, yy))| {
                let ch = plane % c;
                let src = &xs[plane * hw..(plane + 1) * hw];
                for ((a, o), &v) in xh.iter_mut().zip(yy.iter_mut()).zip(src) {
                    *a = (v - mean[ch]) * inv_std[ch];
                    *o = g[ch] * *a + bta[ch];
                }
            });
        let out = Tensor::new(&[n, c, h, w], y)?;
        let var = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            },
        );
        Ok((var, training.then_some(stats)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| v.max(T::zero())).collect(),
            grad: None,
        };
        self.push(out, Op::Relu { x })
    }

    /// Concatenates NCHW tensors along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = self.value(*parts.first().ok_or_else(|| NnError::ShapeMismatch("empty concat".into()))?).dims4()?;
        let mut total = 0;
        for &p in parts {
            let [n, c, h, w] = self.value(p).dims4()?;
            if (n, h, w) != (first[0], first[2], first[3]) {
                return Err(NnError::ShapeMismatch("concat spatial/batch dims differ".into()));
            }
            total += c;
        }
        let [n, _, h, w] = first;
        let hw = h * w;
        let mut data = Vec::with_capacity(n * total * hw);
        for b in 0..n {
            for &p in parts {
                let c = self.value(p).shape[1];
                data.extend_from_slice(&self.value(p).data[b * c * hw..(b + 1) * c * hw]);
            }
        }
        let out = Tensor::new(&[n, total, h, w], data)?;
        Ok(self.push(out, Op::Concat { parts: parts.to_vec() }))
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var, NnError> {
        let [n, c, h, w] = self.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(NnError::OddSpatialDim(h, w));
        }
        let data = ops::avg_pool2_forward(&self.value(x).data, n * c, h, w);
        let out = Tensor::new(&[n, c, h / 2, w / 2], data)?;
        Ok(self.push(out, Op::AvgPool2 { x }))
    }

    /// 3x3 max pooling, stride 2, padding 1.
    pub fn max_pool(&mut self, x: Var) -> Result<Var, NnError> {
        let [n, c, h, w] = self.value(x).dims4()?;
        let (data, arg, oh, ow) = ops::max_pool_forward(&self.value(x).data, n * c, h, w);
        let out = Tensor::new(&[n, c, oh, ow], data)?;
        Ok(self.push(out, Op::MaxPool { x, arg }))
    }

    /// Global average pooling: NCHW to (N, C).
    pub fn gap(&mut self, x: Var) -> Result<Var, NnError> {
        let [n, c, h, w] = self.value(x).dims4()?;
        let hw = h * w;
        let scale = T::of(1.0 / hw as f64);
        let data = self
            .value(x)
            .data
            .chunks(hw)
            .map(|plane| plane.iter().copied().sum::<T>() * scale)
            .collect();
        let out = Tensor::new(&[n, c], data)?;
        Ok(self.push(out, Op::Gap { x }))
    }

    /// Affine map `y = x W^T + b` for `x: (N, D)`, `W: (O, D)`, `b: (O)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let (xs, ws, bs) = (self.value(x), self.value(w), self.value(b));
        let (n, d) = match xs.shape[..] {
            [n, d] => (n, d),
            _ => return Err(NnError::ShapeMismatch(format!("linear input {:?}", xs.shape))),
        };
        let o = match ws.shape[..] {
            [o, dd] if dd == d => o,
            _ => return Err(NnError::ShapeMismatch(format!("weight {:?} for {d} inputs", ws.shape))),
        };
        if bs.len() != o {
            return Err(NnError::ShapeMismatch("bias length".into()));
        }
        let mut data: Vec<T> = (0..n).flat_map(|_| bs.data.iter().copied()).collect();
        T::gemm(n, d, o, T::one(), &xs.data, (d as isize, 1), &ws.data, (1, d as isize), T::one(), &mut data, o as isize);
        let out = Tensor::new(&[n, o], data)?;
        Ok(self.push(out, Op::Linear { x, w, b }))
    }

    /// Mean binary cross-entropy with logits over entries where `mask` is set.
    /// With nothing observed the loss is zero and so is every gradient.
    pub fn masked_bce(&mut self, logits: Var, targets: &[T], mask: &[bool]) -> Result<Var, NnError> {
        let z = &self.value(logits).data;
        if targets.len() != z.len() || mask.len() != z.len() {
            return Err(NnError::ShapeMismatch("targets/mask length".into()));
        }
        let count = mask.iter().filter(|&&m| m).count();
        let mut sum = 0.0;
        for ((&zi, &t), &m) in z.iter().zip(targets).zip(mask) {
            if m {
                let (zf, tf) = (zi.f64(), t.f64());
                sum += zf.max(0.0) - tf * zf + (-zf.abs()).exp().ln_1p();
            }
        }
        let loss = if count == 0 { 0.0 } else { sum / count as f64 };
        let out = Tensor::new(&[1], vec![T::of(loss)])?;
        Ok(self.push(
            out,
            Op::MaskedBce {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                count,
            },
        ))
    }

    /// `sum(x * weights)`, a scalar.
    pub fn weighted_sum(&mut self, x: Var, weights: &[T]) -> Result<Var, NnError> {
        let xs = &self.value(x).data;
        if xs.len() != weights.len() {
            return Err(NnError::ShapeMismatch("weights length".into()));
        }
        let s = xs.iter().zip(weights).map(|(&a, &b)| a * b).sum();
        let out = Tensor::new(&[1], vec![s])?;
        Ok(self.push(out, Op::WeightedSum { x, weights: weights.to_vec() }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NnError> {
        let ones = vec![T::one(); self.value(x).len()];
        self.weighted_sum(x, &ones)
    }

    /// Back-propagates from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>, NnError> {
        self.backward_with(root, &[T::one()])
    }

    /// Back-propagates an arbitrary upstream gradient `seed` for `root`.
    pub fn backward_with(&self, root: Var, seed: &[T]) -> Result<Gradients<T>, NnError> {
        if root.0 >= self.nodes.len() {
            return Err(NnError::NoRecordedGraph);
        }
        if seed.len() != self.value(root).len() {
            return Err(NnError::ShapeMismatch(format!(
                "seed of length {} for a node of length {}",
                seed.len(),
                self.value(root).len()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(seed.to_vec());
        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(i, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, geom } => {
                let need_dx = self.needs_grad(*x);
                let (dx, dw) = ops::conv2d_backward(&self.value(*x).data, &self.value(*w).data, dy, geom, need_dx);
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate(grads, *w, dw);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            } => {
                let [n, c, h, w] = node.value.dims4().expect("recorded as NCHW");
                let hw = h * w;
                let g = &self.value(*gamma).data;
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * hw;
                        for k in base..base + hw {
                            dgamma[ch] = dgamma[ch] + dy[k] * xhat[k];
                            dbeta[ch] = dbeta[ch] + dy[k];
                        }
                    }
                }
                let count = T::of((n * hw) as f64);
                let mut dx = vec![T::zero(); dy.len()];
                dx.par_chunks_mut(hw.max(1)).enumerate().for_each(|(plane, d)| {
                    let ch = plane % c;
                    let base = plane * hw;
                    let scale = g[ch] * inv_std[ch];
                    for (k, v) in d.iter_mut().enumerate() {
                        *v = if *training {
                            scale / count * (count * dy[base + k] - dbeta[ch] - xhat[base + k] * dgamma[ch])
                        } else {
                            scale * dy[base + k]
                        };
                    }
                });
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *gamma, dgamma);
                self.accumulate(grads, *beta, dbeta);
            }
            Op::Relu { x } => {
                let xs = &self.value(*x).data;
                let dx = xs
                    .iter()
                    .zip(dy)
                    .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Concat { parts } => {
                let [n, total, h, w] = node.value.dims4().expect("recorded as NCHW");
                let hw = h * w;
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).shape[1];
                    let mut dx = Vec::with_capacity(n * c * hw);
                    for b in 0..n {
                        let start = (b * total + offset) * hw;
                        dx.extend_from_slice(&dy[start..start + c * hw]);
                    }
                    self.accumulate(grads, p, dx);
                    offset += c;
                }
            }
            Op::AvgPool2 { x } => {
                let [n, c, h, w] = self.value(*x).dims4().expect("recorded as NCHW");
                self.accumulate(grads, *x, ops::avg_pool2_backward(dy, n * c, h, w));
            }
            Op::MaxPool { x, arg } => {
                let [n, c, h, w] = self.value(*x).dims4().expect("recorded as NCHW");
                self.accumulate(grads, *x, ops::max_pool_backward(dy, arg, n * c, h, w));
            }
            Op::Gap { x } => {
                let [_, _, h, w] = self.value(*x).dims4().expect("recorded as NCHW");
                let hw = h * w;
                let scale = T::of(1.0 / hw as f64);
                let dx = dy.iter().flat_map(|&d| std::iter::repeat_n(d * scale, hw)).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Linear { x, w, b } => {
                let (xs, ws) = (self.value(*x), self.value(*w));
                let (n, d) = (xs.shape[0], xs.shape[1]);
                let o = ws.shape[0];
                let mut dx = vec![T::zero(); n * d];
                T::gemm(n, o, d, T::one(), dy, (o as isize, 1), &ws.data, (d as isize, 1), T::zero(), &mut dx, d as isize);
                let mut dw = vec![T::zero(); o * d];
                T::gemm(o, n, d, T::one(), dy, (1, o as isize), &xs.data, (d as isize, 1), T::zero(), &mut dw, d as isize);
                let mut db = vec![T::zero(); o];
                for row in dy.chunks(o) {
                    for (acc, &v) in db.iter_mut().zip(row) {
                        *acc = *acc + v;
                    }
                }
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *w, dw);
                self.accumulate(grads, *b, db);
            }
            Op::MaskedBce {
                logits,
                targets,
                mask,
                count,
            } => {
                let z = &self.value(*logits).data;
                let scale = if *count == 0 { T::zero() } else { dy[0] / T::of(*count as f64) };
                let dz = z
                    .iter()
                    .zip(targets)
                    .zip(mask)
                    .map(|((&zi, &t), &m)| {
                        if m {
                            (sigmoid(zi) - t) * scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                self.accumulate(grads, *logits, dz);
            }
            Op::WeightedSum { x, weights } => {
                let dx = weights.iter().map(|&wgt| wgt * dy[0]).collect();
                self.accumulate(grads, *x, dx);
            }
        }
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tape<T> {
    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
        if self.nodes[v.0].needs_grad {
            add_into(grads, v, g);
        }
    }
}

fn add_into<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(g) {
                *a = *a + b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

//! A configurable DenseNet: 7x7 stem, dense blocks joined by compressing
//! transition layers, final batch norm and global average pooling, plus an
//! optional affine head used during training and for Grad-CAM.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use toxpipe_core::depict::StructImage;

use crate::layers::{BatchNormLayer, BatchStats, Binder, ConvLayer, Linear, Module};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::NnError;

/// Input standardization: `(v / 255 - MEAN) / STD` on every channel.
pub const INPUT_MEAN: f64 = 0.5;
pub const INPUT_STD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub block_layers: Vec<usize>,
    pub growth_rate: usize,
    pub stem_channels: usize,
    /// Transition compression θ in (0, 1].
    pub compression: f64,
    /// Bottleneck width as a multiple of the growth rate.
    pub bottleneck_factor: usize,
    /// Square input side in pixels.
    pub input_size: usize,
    /// Head outputs (one per assay).
    pub num_outputs: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl NetworkConfig {
    pub fn desk() -> Self {
        NetworkConfig {
            block_layers: vec![2, 2, 4, 2],
            growth_rate: 8,
            stem_channels: 16,
            compression: 0.5,
            bottleneck_factor: 4,
            input_size: 224,
            num_outputs: 12,
        }
    }

    /// The DenseNet-121 layout.
    pub fn densenet121() -> Self {
        NetworkConfig {
            block_layers: vec![6, 12, 24, 16],
            growth_rate: 32,
            stem_channels: 64,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.block_layers.is_empty() {
            return bad("at least one dense block is required".into());
        }
        if !(self.compression > 0.0 && self.compression <= 1.0) {
            return bad(format!("compression {} outside (0, 1]", self.compression));
        }
        if self.growth_rate == 0 || self.stem_channels == 0 || self.bottleneck_factor == 0 {
            return bad("growth rate, stem channels and bottleneck factor must be positive".into());
        }
        // Stem halves twice, each transition halves once; all must stay even.
        let mut side = self.input_size;
        for _ in 0..2 + self.block_layers.len() - 1 {
            if side == 0 || !side.is_multiple_of(2) {
                return bad(format!(
                    "input size {} does not halve evenly through the network",
                    self.input_size
                ));
            }
            side /= 2;
        }
        if self.num_outputs == 0 {
            return bad("head needs at least one output".into());
        }
        Ok(())
    }

    /// Compressed channel count after a transition.
    pub fn compress(&self, channels: usize) -> usize {
        ((self.compression * channels as f64).ceil() as usize).max(1)
    }

    /// Channel count of the pooled feature vector.
    pub fn feature_dim(&self) -> usize {
        let mut c = self.stem_channels;
        for (i, &layers) in self.block_layers.iter().enumerate() {
            c += layers * self.growth_rate;
            if i + 1 < self.block_layers.len() {
                c = self.compress(c);
            }
        }
        c
    }

    /// Side of the final feature map.
    pub fn feature_map_size(&self) -> usize {
        self.input_size >> (2 + self.block_layers.len() - 1)
    }
}

/// BN, ReLU, 1x1 conv to the bottleneck width, BN, ReLU, 3x3 conv to `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub bn1: BatchNormLayer<T>,
    pub conv1: ConvLayer<T>,
    pub bn2: BatchNormLayer<T>,
    pub conv2: ConvLayer<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new<R: rand::Rng + ?Sized>(
        in_ch: usize,
        bottleneck: usize,
        growth: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        Ok(DenseLayer {
            bn1: BatchNormLayer::new(in_ch),
            conv1: ConvLayer::new(bottleneck, in_ch, 1, 1, 0, rng)?,
            bn2: BatchNormLayer::new(bottleneck),
            conv2: ConvLayer::new(growth, bottleneck, 3, 1, 1, rng)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, bind: &mut Binder) -> Result<Var, NnError> {
        let h = self.bn1.forward(tape, x, bind)?;
        let h = tape.relu(h);
        let h = self.conv1.forward(tape, h, bind)?;
        let h = self.bn2.forward(tape, h, bind)?;
        let h = tape.relu(h);
        self.conv2.forward(tape, h, bind)
    }

    fn parts(&self) -> [&dyn Module<T>; 4] {
        [&self.bn1, &self.conv1, &self.bn2, &self.conv2]
    }

    fn parts_mut(&mut self) -> [&mut dyn Module<T>; 4] {
        [&mut self.bn1, &mut self.conv1, &mut self.bn2, &mut self.conv2]
    }
}

impl<T: Scalar> Module<T> for DenseLayer<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        self.parts().into_iter().flat_map(|m| m.params()).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.parts_mut().into_iter().flat_map(|m| m.params_mut()).collect()
    }
    fn state(&self) -> Vec<&Tensor<T>> {
        self.parts().into_iter().flat_map(|m| m.state()).collect()
    }
    fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.parts_mut().into_iter().flat_map(|m| m.state_mut()).collect()
    }
    fn absorb_stats(&mut self, stats: &mut std::slice::Iter<'_, BatchStats>) {
        for m in self.parts_mut() {
            m.absorb_stats(stats);
        }
    }
}

/// Number of layers, growth rate and bottleneck width of a dense block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseBlockSpec {
    pub num_layers: usize,
    pub growth_rate: usize,
    pub bottleneck_width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock<T> {
    pub spec: DenseBlockSpec,
    pub in_channels: usize,
    pub layers: Vec<DenseLayer<T>>,
}

impl<T: Scalar> DenseBlock<T> {
    pub fn new<R: rand::Rng + ?Sized>(
        in_channels: usize,
        spec: DenseBlockSpec,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let layers = (0..spec.num_layers)
            .map(|i| {
                DenseLayer::new(
                    in_channels + i * spec.growth_rate,
                    spec.bottleneck_width,
                    spec.growth_rate,
                    rng,
                )
            })
            .collect::<Result<_, _>>()?;
        Ok(DenseBlock {
            spec,
            in_channels,
            layers,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.in_channels + self.spec.num_layers * self.spec.growth_rate
    }

    /// Each layer sees the concatenation of the block input and every earlier
    /// layer's output; the block returns the full concatenation.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var, bind: &mut Binder) -> Result<Var, NnError> {
        let c = tape.value(x).dims4()?[1];
        if c != self.in_channels {
            return Err(NnError::ShapeMismatch(format!(
                "dense block expects {} channels, got {c}",
                self.in_channels
            )));
        }
        let mut features = x;
        for layer in &self.layers {
            let new = layer.forward(tape, features, bind)?;
            features = tape.concat(&[features, new])?;
        }
        Ok(features)
    }
}

impl<T: Scalar> Module<T> for DenseBlock<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
    fn state(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.state()).collect()
    }
    fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.state_mut()).collect()
    }
    fn absorb_stats(&mut self, stats: &mut std::slice::Iter<'_, BatchStats>) {
        for layer in &mut self.layers {
            layer.absorb_stats(stats);
        }
    }
}

/// BN, ReLU, 1x1 conv to ⌈θC⌉ channels, 2x2 average pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub bn: BatchNormLayer<T>,
    pub conv: ConvLayer<T>,
}

impl<T: Scalar> Transition<T> {
    pub fn new<R: rand::Rng + ?Sized>(in_ch: usize, out_ch: usize, rng: &mut R) -> Result<Self, NnError> {
        Ok(Transition {
            bn: BatchNormLayer::new(in_ch),
            conv: ConvLayer::new(out_ch, in_ch, 1, 1, 0, rng)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, bind: &mut Binder) -> Result<Var, NnError> {
        let [_, _, h, w] = tape.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(NnError::OddSpatialDim(h, w));
        }
        let y = self.bn.forward(tape, x, bind)?;
        let y = tape.relu(y);
        let y = self.conv.forward(tape, y, bind)?;
        tape.avg_pool2(y)
    }
}

impl<T: Scalar> Module<T> for Transition<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        [self.bn.params(), self.conv.params()].concat()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = self.bn.params_mut();
        v.extend(self.conv.params_mut());
        v
    }
    fn state(&self) -> Vec<&Tensor<T>> {
        [self.bn.state(), self.conv.state()].concat()
    }
    fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = self.bn.state_mut();
        v.extend(self.conv.state_mut());
        v
    }
    fn absorb_stats(&mut self, stats: &mut std::slice::Iter<'_, BatchStats>) {
        self.bn.absorb_stats(stats);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet<T> {
    pub config: NetworkConfig,
    pub stem_conv: ConvLayer<T>,
    pub stem_bn: BatchNormLayer<T>,
    pub blocks: Vec<DenseBlock<T>>,
    pub transitions: Vec<Transition<T>>,
    pub final_bn: BatchNormLayer<T>,
    pub head: Option<Linear<T>>,
}

/// Handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Final BN+ReLU feature map, (N, D, h, w).
    pub feature_map: Var,
    /// Pooled features, (N, D).
    pub features: Var,
    /// Head logits, (N, outputs), when the head is present.
    pub logits: Option<Var>,
}

impl<T: Scalar> DenseNet<T> {
    /// Randomly initialized network with a head, deterministic in `seed`.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem_conv = ConvLayer::new(config.stem_channels, 3, 7, 2, 3, &mut rng)?;
        let stem_bn = BatchNormLayer::new(config.stem_channels);
        let mut c = config.stem_channels;
        let mut blocks = Vec::new();
        let mut transitions = Vec::new();
        for (i, &layers) in config.block_layers.iter().enumerate() {
            let spec = DenseBlockSpec {
                num_layers: layers,
                growth_rate: config.growth_rate,
                bottleneck_width: config.bottleneck_factor * config.growth_rate,
            };
            let block = DenseBlock::new(c, spec, &mut rng)?;
            c = block.out_channels();
            blocks.push(block);
            if i + 1 < config.block_layers.len() {
                let out = config.compress(c);
                transitions.push(Transition::new(c, out, &mut rng)?);
                c = out;
            }
        }
        let final_bn = BatchNormLayer::new(c);
        let head = Some(Linear::new(config.num_outputs, c, &mut rng));
        Ok(DenseNet {
            config,
            stem_conv,
            stem_bn,
            blocks,
            transitions,
            final_bn,
            head,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.final_bn.gamma.len()
    }

    /// Every batch norm, in forward order.
    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNormLayer<T>> {
        let mut out = vec![&mut self.stem_bn];
        let mut transitions = self.transitions.iter_mut();
        for block in &mut self.blocks {
            for layer in &mut block.layers {
                out.push(&mut layer.bn1);
                out.push(&mut layer.bn2);
            }
            if let Some(t) = transitions.next() {
                out.push(&mut t.bn);
            }
        }
        out.push(&mut self.final_bn);
        out
    }

    /// Runs the network on an NCHW input already on the tape.
    pub fn forward(&self, tape: &mut Tape<T>, input: Var, bind: &mut Binder) -> Result<ForwardPass, NnError> {
        let (feature_map, features) = self.forward_trunk(tape, input, bind)?;
        let logits = match &self.head {
            Some(head) => Some(head.forward(tape, features, bind)?),
            None => None,
        };
        Ok(ForwardPass {
            feature_map,
            features,
            logits,
        })
    }

    /// Everything up to global pooling; returns `(feature_map, features)`.
    pub fn forward_trunk(&self, tape: &mut Tape<T>, input: Var, bind: &mut Binder) -> Result<(Var, Var), NnError> {
        let [_, c, h, w] = tape.value(input).dims4()?;
        let s = self.config.input_size;
        if (c, h, w) != (3, s, s) {
            return Err(NnError::ShapeMismatch(format!(
                "network expects 3x{s}x{s} input, got {c}x{h}x{w}"
            )));
        }
        let x = self.stem_conv.forward(tape, input, bind)?;
        let x = self.stem_bn.forward(tape, x, bind)?;
        let x = tape.relu(x);
        let mut x = tape.max_pool(x)?;
        for (i, block) in self.blocks.iter().enumerate() {
            x = block.forward(tape, x, bind)?;
            if let Some(t) = self.transitions.get(i) {
                x = t.forward(tape, x, bind)?;
            }
        }
        let x = self.final_bn.forward(tape, x, bind)?;
        let feature_map = tape.relu(x);
        let features = tape.gap(feature_map)?;
        Ok((feature_map, features))
    }

    /// Pooled features of each image, without the head, using running
    /// batch-norm statistics.
    pub fn extract(&self, images: &[&StructImage]) -> Result<Vec<Vec<T>>, NnError> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let input = tape.constant(image_batch(images, self.config.input_size)?);
        let mut bind = Binder::new(false);
        let (_, features) = self.forward_trunk(&mut tape, input, &mut bind)?;
        let d = self.feature_dim();
        Ok(tape.value(features).data.chunks(d).map(<[T]>::to_vec).collect())
    }

    /// Head probabilities (sigmoid of the logits) for each image.
    pub fn predict(&self, images: &[&StructImage]) -> Result<Vec<Vec<T>>, NnError> {
        if self.head.is_none() {
            return Err(NnError::UntrainedHead);
        }
        let mut tape = Tape::new();
        let input = tape.constant(image_batch(images, self.config.input_size)?);
        let mut bind = Binder::new(false);
        let pass = self.forward(&mut tape, input, &mut bind)?;
        let logits = pass.logits.expect("head present");
        Ok(tape
            .value(logits)
            .data
            .chunks(self.config.num_outputs)
            .map(|row| row.iter().map(|&z| crate::tape::sigmoid(z)).collect())
            .collect())
    }

    fn modules(&self) -> Vec<&dyn Module<T>> {
        let mut m: Vec<&dyn Module<T>> = vec![&self.stem_conv, &self.stem_bn];
        for (i, b) in self.blocks.iter().enumerate() {
            m.push(b);
            if let Some(t) = self.transitions.get(i) {
                m.push(t);
            }
        }
        m.push(&self.final_bn);
        if let Some(h) = &self.head {
            m.push(h);
        }
        m
    }

    fn modules_mut(&mut self) -> Vec<&mut dyn Module<T>> {
        let mut m: Vec<&mut dyn Module<T>> = vec![&mut self.stem_conv, &mut self.stem_bn];
        let mut transitions = self.transitions.iter_mut();
        for b in self.blocks.iter_mut() {
            m.push(b);
            if let Some(t) = transitions.next() {
                m.push(t);
            }
        }
        m.push(&mut self.final_bn);
        if let Some(h) = &mut self.head {
            m.push(h);
        }
        m
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

impl<T: Scalar> Module<T> for DenseNet<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        self.modules().into_iter().flat_map(|m| m.params()).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.modules_mut().into_iter().flat_map(|m| m.params_mut()).collect()
    }
    fn state(&self) -> Vec<&Tensor<T>> {
        self.modules().into_iter().flat_map(|m| m.state()).collect()
    }
    fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.modules_mut().into_iter().flat_map(|m| m.state_mut()).collect()
    }
    fn absorb_stats(&mut self, stats: &mut std::slice::Iter<'_, BatchStats>) {
        for m in self.modules_mut() {
            m.absorb_stats(stats);
        }
    }
}

/// Standardized NCHW batch from RGB images of side `size`.
pub fn image_batch<T: Scalar>(images: &[&StructImage], size: usize) -> Result<Tensor<T>, NnError> {
    let plane = size * size;
    let mut data = vec![T::zero(); images.len() * 3 * plane];
    for (b, img) in images.iter().enumerate() {
        if img.width != size || img.height != size {
            return Err(NnError::ShapeMismatch(format!(
                "image is {}x{}, network expects {size}x{size}",
                img.width, img.height
            )));
        }
        for (p, px) in img.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                let v = (f64::from(px[c]) / 255.0 - INPUT_MEAN) / INPUT_STD;
                data[(b * 3 + c) * plane + p] = T::of(v);
            }
        }
    }
    Tensor::new(&[images.len(), 3, size, size], data)
}

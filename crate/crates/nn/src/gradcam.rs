//! Grad-CAM saliency over the final feature map and heatmap overlays.

use toxpipe_core::depict::StructImage;

use crate::densenet::{image_batch, DenseNet};
use crate::layers::Binder;
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::NnError;

pub const SOURCE_LAYER: &str = "final_bn_relu";

/// Row-major map with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub source_layer: String,
}

impl Heatmap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Bilinear resampling with half-pixel centers and edge clamping.
    pub fn upsample(&self, width: usize, height: usize) -> Heatmap {
        let sample = |pos: usize, out: usize, src: usize| -> (usize, usize, f64) {
            let s = ((pos as f64 + 0.5) * src as f64 / out as f64 - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        };
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            let (y0, y1, ty) = sample(y, height, self.height);
            for x in 0..width {
                let (x0, x1, tx) = sample(x, width, self.width);
                let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
                let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
                values.push((top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0));
            }
        }
        Heatmap {
            width,
            height,
            values,
            source_layer: self.source_layer.clone(),
        }
    }
}

/// Grad-CAM result with the intermediate quantities it was built from.
#[derive(Debug, Clone)]
pub struct GradCam<T> {
    /// Normalized map at feature-map resolution.
    pub heatmap: Heatmap,
    /// Channel weights: spatial mean of the logit gradient per channel.
    pub alphas: Vec<f64>,
    /// Feature-map activations, (D, h, w) flattened.
    pub activations: Vec<T>,
    /// Gradient of the logit with respect to the activations.
    pub gradients: Vec<T>,
    /// Head logit for the label.
    pub logit: f64,
}

/// Grad-CAM for one image and one head output, with running batch-norm
/// statistics.
pub fn gradcam<T: Scalar>(net: &DenseNet<T>, img: &StructImage, label: usize) -> Result<GradCam<T>, NnError> {
    if net.head.is_none() {
        return Err(NnError::UntrainedHead);
    }
    if label >= net.config.num_outputs {
        return Err(NnError::InvalidLabel(label));
    }
    let mut tape = Tape::new();
    let input = tape.constant(image_batch(&[img], net.config.input_size)?);
    let mut bind = Binder::new(false);
    let pass = net.forward(&mut tape, input, &mut bind)?;
    let logits = pass.logits.expect("head present");
    let mut seed = vec![T::zero(); net.config.num_outputs];
    seed[label] = T::one();
    let grads = tape.backward_with(logits, &seed)?;

    let [_, d, h, w] = tape.value(pass.feature_map).dims4()?;
    let activations = tape.value(pass.feature_map).data.clone();
    let gradients = grads.get_or_zero(pass.feature_map, activations.len());
    let hw = h * w;
    let alphas: Vec<f64> = gradients
        .chunks(hw)
        .map(|g| g.iter().map(|v| v.f64()).sum::<f64>() / hw as f64)
        .collect();
    let mut raw = vec![0.0f64; hw];
    for (k, &a) in alphas.iter().enumerate().take(d) {
        if a == 0.0 {
            continue;
        }
        for (r, v) in raw.iter_mut().zip(&activations[k * hw..(k + 1) * hw]) {
            *r += a * v.f64();
        }
    }
    for r in &mut raw {
        *r = r.max(0.0);
    }
    let max = raw.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for r in &mut raw {
            *r /= max;
        }
    }
    Ok(GradCam {
        heatmap: Heatmap {
            width: w,
            height: h,
            values: raw,
            source_layer: SOURCE_LAYER.to_string(),
        },
        alphas,
        activations,
        gradients,
        logit: tape.value(logits).data[label].f64(),
    })
}

/// Blue-to-red ramp: 0 is pure blue, 1 pure red.
pub fn colormap(h: f64) -> [f64; 3] {
    let h = h.clamp(0.0, 1.0);
    [255.0 * h, 0.0, 255.0 * (1.0 - h)]
}

/// `(1 - alpha)·image + alpha·colormap(heat)`, rounded per channel.
pub fn overlay(heat: &Heatmap, img: &StructImage, alpha: f64) -> Result<StructImage, NnError> {
    if heat.width != img.width || heat.height != img.height {
        return Err(NnError::DimMismatch {
            heatmap: (heat.width, heat.height),
            image: (img.width, img.height),
        });
    }
    let alpha = alpha.clamp(0.0, 1.0);
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let orig = img.get(x, y);
            let ramp = colormap(heat.get(x, y));
            let mut px = [0u8; 3];
            for c in 0..3 {
                let v = (1.0 - alpha) * f64::from(orig[c]) + alpha * ramp[c];
                px[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            out.set(x, y, px);
        }
    }
    Ok(out)
}

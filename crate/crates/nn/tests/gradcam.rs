use toxpipe_core::depict::{depict, StructImage};
use toxpipe_core::smiles::parse;
use toxpipe_nn::gradcam::{gradcam, SOURCE_LAYER};
use toxpipe_nn::{DenseNet, NetworkConfig, NnError};

fn net(seed: u64) -> DenseNet<f64> {
    let config = NetworkConfig {
        block_layers: vec![1, 2],
        input_size: 32,
        ..NetworkConfig::desk()
    };
    DenseNet::new(config, seed).unwrap()
}

fn image(smiles: &str) -> StructImage {
    depict(&parse(smiles).unwrap(), 32).unwrap()
}

#[test]
fn zeroed_head_row_gives_an_all_zero_map() {
    let mut model = net(1);
    let head = model.head.as_mut().unwrap();
    let d = head.in_dim();
    for v in &mut head.weight.data[3 * d..4 * d] {
        *v = 0.0;
    }
    let cam = gradcam(&model, &image("c1ccccc1O"), 3).unwrap();
    assert!(cam.gradients.iter().all(|&g| g == 0.0));
    assert!(cam.heatmap.is_zero());
    // Other labels are unaffected.
    assert!(!gradcam(&model, &image("c1ccccc1O"), 2).unwrap().heatmap.is_zero());
}

#[test]
fn normalized_map_peaks_at_exactly_one() {
    for (seed, smiles) in [(1, "CCO"), (2, "c1ccccc1"), (3, "CC(=O)Nc1ccc(O)cc1"), (4, "ClCCl")] {
        let model = net(seed);
        for label in 0..12 {
            let cam = gradcam(&model, &image(smiles), label).unwrap();
            let h = &cam.heatmap;
            assert_eq!(h.source_layer, SOURCE_LAYER);
            assert!(h.values.iter().all(|v| (0.0..=1.0).contains(v)));
            if !h.is_zero() {
                assert_eq!(h.values.iter().copied().fold(0.0, f64::max), 1.0);
            }
            let up = h.upsample(32, 32);
            assert!(up.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn channel_weights_match_loop_and_closed_form() {
    let model = net(5);
    let cam = gradcam(&model, &image("c1ccc2ccccc2c1"), 7).unwrap();
    let (w, h) = (cam.heatmap.width, cam.heatmap.height);
    let d = model.feature_dim();
    assert_eq!(cam.gradients.len(), d * w * h);
    assert_eq!(cam.alphas.len(), d);
    let head = model.head.as_ref().unwrap();
    for k in 0..d {
        let mut sum = 0.0;
        for y in 0..h {
            for x in 0..w {
                sum += cam.gradients[(k * h + y) * w + x];
            }
        }
        let looped = sum / (w * h) as f64;
        assert!((cam.alphas[k] - looped).abs() <= 1e-10);
        // GAP followed by an affine head spreads W[label, k] evenly over the map.
        let closed = head.weight.data[7 * d + k] / (w * h) as f64;
        assert!((cam.alphas[k] - closed).abs() <= 1e-10);
    }

    let mut raw = vec![0.0; w * h];
    for (k, a) in cam.alphas.iter().enumerate() {
        for (p, r) in raw.iter_mut().enumerate() {
            *r += a * cam.activations[k * w * h + p];
        }
    }
    let max = raw.iter().copied().fold(0.0, f64::max);
    for (r, v) in raw.iter().zip(&cam.heatmap.values) {
        assert!((r.max(0.0) / max - v).abs() <= 1e-12);
    }
}

#[test]
fn gradcam_errors() {
    let mut model = net(6);
    let img = image("C");
    assert_eq!(gradcam(&model, &img, 12).unwrap_err(), NnError::InvalidLabel(12));
    model.head = None;
    assert_eq!(gradcam(&model, &img, 0).unwrap_err(), NnError::UntrainedHead);
}

use std::time::Instant;

use toxpipe_core::depict::depict;
use toxpipe_core::smiles::parse;
use toxpipe_nn::{
    image_batch, refresh_running_stats, train, Binder, DenseNet, LabeledImage, Module, NetworkConfig, NnError, Tape,
    TrainConfig,
};

const SMILES: &[&str] = &[
    "c1ccccc1", "C", "CCO", "CC(=O)O", "c1ccc2ccccc2c1", "ClCCl", "CCN", "c1ccncc1",
    "CCCCCC", "OCCO", "Brc1ccccc1", "CC(C)C", "C1CCCCC1", "O=C=O", "c1ccoc1", "CS",
];

fn small_config() -> NetworkConfig {
    NetworkConfig {
        input_size: 32,
        ..NetworkConfig::desk()
    }
}

fn examples(size: usize, n: usize) -> Vec<LabeledImage> {
    SMILES
        .iter()
        .cycle()
        .take(n)
        .enumerate()
        .map(|(i, s)| {
            let mol = parse(s).unwrap();
            let aromatic = mol.atoms.iter().any(|a| a.aromatic);
            LabeledImage {
                image: depict(&mol, size).unwrap(),
                labels: (0..12).map(|k| if (k + i) % 3 == 0 || aromatic { 1.0 } else { 0.0 }).collect(),
                mask: (0..12).map(|k| (k + i) % 4 != 0).collect(),
            }
        })
        .collect()
}

fn checksum(net: &DenseNet<f32>) -> Vec<u32> {
    net.state().iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect()
}

#[test]
fn fully_masked_data_leaves_parameters_unchanged() {
    let mut data = examples(32, 8);
    for e in &mut data {
        e.mask = vec![false; 12];
    }
    let mut net = DenseNet::<f32>::new(small_config(), 4).unwrap();
    let before: Vec<Vec<f32>> = net.params().iter().map(|t| t.data.clone()).collect();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let history = train(&mut net, &data, &cfg).unwrap();
    assert_eq!(history, vec![0.0]);
    let after: Vec<Vec<f32>> = net.params().iter().map(|t| t.data.clone()).collect();
    assert_eq!(before, after);
}

#[test]
fn fixed_seed_training_is_reproducible() {
    let data = examples(32, 12);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 5,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = DenseNet::<f32>::new(small_config(), 2).unwrap();
        let h = train(&mut net, &data, &cfg).unwrap();
        (checksum(&net), h)
    };
    assert_eq!(run(), run());
}

#[test]
fn empty_dataset_is_rejected() {
    let mut net = DenseNet::<f32>::new(small_config(), 0).unwrap();
    assert_eq!(train(&mut net, &[], &TrainConfig::default()), Err(NnError::EmptyDataset));
}

#[test]
fn benzene_and_methane_features_differ_after_an_epoch() {
    let data = examples(32, 16);
    let mut net = DenseNet::<f32>::new(small_config(), 3).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    train(&mut net, &data, &cfg).unwrap();
    let benzene = depict(&parse("c1ccccc1").unwrap(), 32).unwrap();
    let methane = depict(&parse("C").unwrap(), 32).unwrap();
    let f = net.extract(&[&benzene, &methane]).unwrap();
    assert_eq!(f[0].len(), net.config.feature_dim());
    assert_ne!(f[0], f[1]);
}

/// Head outputs with batch statistics, leaving the running buffers alone.
fn batch_mode_logits(net: &DenseNet<f32>, data: &[LabeledImage]) -> Vec<f32> {
    let images: Vec<_> = data.iter().map(|e| &e.image).collect();
    let mut tape = Tape::new();
    let input = tape.constant(image_batch(&images, net.config.input_size).unwrap());
    let pass = net.forward(&mut tape, input, &mut Binder::new(true)).unwrap();
    tape.value(pass.logits.unwrap()).data.clone()
}

#[test]
fn refreshed_running_stats_average_the_pass_and_keep_weights() {
    let data = examples(32, 8);
    let images: Vec<_> = data.iter().map(|e| &e.image).collect();
    let (a, b) = (&images[..4], &images[4..]);
    let mut net = DenseNet::<f32>::new(small_config(), 6).unwrap();
    net.stem_bn.running_mean.data.iter_mut().for_each(|v| *v = 5.0);
    let weights: Vec<Vec<f32>> = net.params().iter().map(|t| t.data.clone()).collect();

    // Batch 0 replaces whatever was there.
    let mut only_a = net.clone();
    refresh_running_stats(&mut only_a, a, 0).unwrap();
    let mut only_b = net.clone();
    refresh_running_stats(&mut only_b, b, 0).unwrap();
    assert!(only_a.stem_bn.running_mean.data.iter().all(|&v| v != 5.0));

    // Batch 1 averages with it.
    refresh_running_stats(&mut net, a, 0).unwrap();
    refresh_running_stats(&mut net, b, 1).unwrap();
    for ((avg, x), y) in net.stem_bn.running_mean.data.iter().zip(&only_a.stem_bn.running_mean.data).zip(&only_b.stem_bn.running_mean.data) {
        assert!((avg - (x + y) / 2.0).abs() < 1e-6, "{avg} {x} {y}");
    }
    assert_eq!(weights, net.params().iter().map(|t| t.data.clone()).collect::<Vec<_>>());
    assert!(net.batch_norms_mut().iter().all(|bn| bn.momentum == 0.1));
    assert_eq!(net.batch_norms_mut().len(), 2 + 2 * net.config.block_layers.iter().sum::<usize>() + net.config.block_layers.len() - 1);
}

#[test]
fn inference_after_training_matches_batch_statistics() {
    // A high learning rate moves the weights far within the last few steps;
    // the running statistics must still describe the final network.
    let data = examples(32, 64);
    let mut net = DenseNet::<f32>::new(small_config(), 8).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 16,
        learning_rate: 0.1,
        seed: 2,
        ..TrainConfig::default()
    };
    train(&mut net, &data, &cfg).unwrap();
    let images: Vec<_> = data.iter().map(|e| &e.image).collect();
    let eval: Vec<f32> = net.predict(&images).unwrap().concat();
    let sigmoid = |z: f32| 1.0 / (1.0 + (-z).exp());
    let batch: Vec<f32> = batch_mode_logits(&net, &data).into_iter().map(sigmoid).collect();
    let gap = eval.iter().zip(&batch).map(|(a, b)| (a - b).abs()).sum::<f32>() / eval.len() as f32;
    assert!(gap < 0.05, "mean |eval - batch| = {gap}");
}

#[test]
fn small_images_overfit() {
    let data = examples(32, 16);
    let mut net = DenseNet::<f32>::new(small_config(), 1).unwrap();
    let cfg = TrainConfig {
        epochs: 150,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let history = train(&mut net, &data, &cfg).unwrap();
    let last = *history.last().unwrap();
    assert!(last < history[0] * 0.5, "{:?}", &history[history.len() - 5..]);
}

#[test]
#[ignore = "timing probe"]
fn step_timing_at_full_size() {
    let data = examples(224, 32);
    let mut net = DenseNet::<f32>::new(NetworkConfig::desk(), 1).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    train(&mut net, &data, &cfg).unwrap();
    eprintln!("one batch of 32 at 224px: {:?}", t.elapsed());
    let t = Instant::now();
    let imgs: Vec<_> = data.iter().map(|e| &e.image).collect();
    net.extract(&imgs).unwrap();
    eprintln!("extract 32: {:?}", t.elapsed());
}

#[test]
#[ignore = "timing probe"]
fn op_timing() {
    use toxpipe_nn::{BnMode, Tape, Tensor};
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(Tensor::full(&[32, 3, 224, 224], 0.5));
    let w = tape.leaf(&Tensor::full(&[16, 3, 7, 7], 0.01));
    let t = Instant::now();
    let y = tape.conv2d(x, w, 2, 3).unwrap();
    eprintln!("stem conv fwd {:?}", t.elapsed());
    let g = tape.leaf(&Tensor::full(&[16], 1.0));
    let b = tape.leaf(&Tensor::full(&[16], 0.0));
    let t = Instant::now();
    let (z, _) = tape.batch_norm(y, g, b, BnMode::Train { eps: 1e-5 }).unwrap();
    eprintln!("bn fwd {:?}", t.elapsed());
    let t = Instant::now();
    let r = tape.relu(z);
    eprintln!("relu fwd {:?}", t.elapsed());
    let t = Instant::now();
    let p = tape.max_pool(r).unwrap();
    eprintln!("maxpool fwd {:?}", t.elapsed());
    let s = tape.sum(p).unwrap();
    let t = Instant::now();
    tape.backward(s).unwrap();
    eprintln!("backward all {:?}", t.elapsed());
}

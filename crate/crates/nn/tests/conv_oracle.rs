mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toxpipe_nn::ops::{conv2d_forward, ConvGeom};
use toxpipe_nn::{Tape, Tensor};

fn random_geom(rng: &mut ChaCha8Rng) -> ConvGeom {
    let k = [1, 3, 5][rng.random_range(0..3)];
    let h = rng.random_range(k..=16);
    let w = rng.random_range(k..=16);
    ConvGeom {
        batch: rng.random_range(1..=2),
        in_ch: rng.random_range(1..=4),
        h,
        w,
        out_ch: rng.random_range(1..=4),
        kh: k,
        kw: k,
        stride: rng.random_range(1..=2),
        pad: rng.random_range(0..=k / 2),
    }
}

#[test]
fn conv_matches_loop_oracle_in_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let g = random_geom(&mut rng);
        let x: Vec<f64> = (0..g.batch * g.in_ch * g.h * g.w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..g.out_ch * g.in_ch * g.kh * g.kw).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = conv2d_forward(&x, &k, &g);
        let slow = oracles::conv_loop(&x, [g.batch, g.in_ch, g.h, g.w], &k, [g.out_ch, g.in_ch, g.kh, g.kw], g.stride, g.pad);
        assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-12, "max deviation {worst}");
}

#[test]
fn conv_matches_loop_oracle_in_single() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let g = random_geom(&mut rng);
        let x: Vec<f64> = (0..g.batch * g.in_ch * g.h * g.w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..g.out_ch * g.in_ch * g.kh * g.kw).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let kf: Vec<f32> = k.iter().map(|&v| v as f32).collect();
        let fast = conv2d_forward(&xf, &kf, &g);
        let slow = oracles::conv_loop(&x, [g.batch, g.in_ch, g.h, g.w], &k, [g.out_ch, g.in_ch, g.kh, g.kw], g.stride, g.pad);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((f64::from(*a) - b).abs() <= 1e-5);
        }
    }
}

#[test]
fn spec_examples() {
    // 1x1 identity kernel.
    let x = Tensor::new(&[1, 1, 3, 3], (0..9).map(f64::from).collect()).unwrap();
    let mut tape = Tape::new();
    let xv = tape.leaf(&x);
    let w = tape.leaf(&Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap());
    let y = tape.conv2d(xv, w, 1, 0).unwrap();
    assert_eq!(tape.value(y).data, x.data);
    // All-ones 3x3 over a constant map: interior is 9c.
    let c = 0.7;
    let x = Tensor::full(&[1, 1, 5, 5], c);
    let xv = tape.leaf(&x);
    let w = tape.leaf(&Tensor::full(&[1, 1, 3, 3], 1.0));
    let y = tape.conv2d(xv, w, 1, 1).unwrap();
    let out = &tape.value(y).data;
    for yy in 1..4 {
        for xx in 1..4 {
            assert!((out[yy * 5 + xx] - 9.0 * c).abs() < 1e-12);
        }
    }
    // Random 1x3x5x5 with 2x3x3x3 kernel.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = oracles::random_tensor(&[1, 3, 5, 5], &mut rng);
    let k = oracles::random_tensor(&[2, 3, 3, 3], &mut rng);
    let xv = tape.leaf(&x);
    let kv = tape.leaf(&k);
    let y = tape.conv2d(xv, kv, 1, 1).unwrap();
    let slow = oracles::conv_loop(&x.data, [1, 3, 5, 5], &k.data, [2, 3, 3, 3], 1, 1);
    for (a, b) in tape.value(y).data.iter().zip(&slow) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn channel_mismatch_is_an_error() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(&Tensor::zeros(&[1, 2, 4, 4]));
    let w = tape.leaf(&Tensor::zeros(&[1, 3, 3, 3]));
    assert!(tape.conv2d(x, w, 1, 1).is_err());
}

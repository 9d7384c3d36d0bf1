//! Brute-force reference implementations used to check the network code.
#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toxpipe_nn::{Binder, Module, NnError, Tape, Tensor, Var};

/// Direct cross-correlation: for every output position, sum input times
/// kernel over channels and kernel offsets, with zero padding.
pub fn conv_loop(x: &[f64], [n, c, h, w]: [usize; 4], k: &[f64], [o, ci, kh, kw]: [usize; 4], stride: usize, pad: usize) -> Vec<f64> {
    assert_eq!(c, ci);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for b in 0..n {
        for co in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ch in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let y = (oy * stride + i) as isize - pad as isize;
                                let xx = (ox * stride + j) as isize - pad as isize;
                                if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                    continue;
                                }
                                acc += x[((b * c + ch) * h + y as usize) * w + xx as usize]
                                    * k[((co * c + ch) * kh + i) * kw + j];
                            }
                        }
                    }
                    out[((b * o + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

/// Batch norm with explicit two-pass statistics over (batch, h, w).
pub fn bn_two_pass(x: &[f64], [n, c, h, w]: [usize; 4], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        let idx: Vec<usize> = (0..n)
            .flat_map(|b| (0..h * w).map(move |p| (b * c + ch) * h * w + p))
            .collect();
        let mean = idx.iter().map(|&i| x[i]).sum::<f64>() / idx.len() as f64;
        let var = idx.iter().map(|&i| (x[i] - mean).powi(2)).sum::<f64>() / idx.len() as f64;
        for &i in &idx {
            out[i] = gamma[ch] * (x[i] - mean) / (var + eps).sqrt() + beta[ch];
        }
    }
    out
}

/// Per-(image, channel) mean of a flat NCHW buffer.
pub fn gap_mean(x: &[f64], [n, c, h, w]: [usize; 4]) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * c);
    for b in 0..n {
        for ch in 0..c {
            let mut s = 0.0;
            for y in 0..h {
                for xx in 0..w {
                    s += x[((b * c + ch) * h + y) * w + xx];
                }
            }
            out.push(s / (h * w) as f64);
        }
    }
    out
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub const FD_STEP: f64 = 1e-5;

/// Relative error with a floor on the denominator, so two gradients that
/// are both essentially zero compare equal.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FdReport {
    pub checked: usize,
    pub max_rel: f64,
}

impl FdReport {
    fn add(&mut self, analytic: f64, numeric: f64) {
        self.checked += 1;
        self.max_rel = self.max_rel.max(rel_error(analytic, numeric));
    }
}

/// Central differences of `sum(f(leaves) * r)` for a random projection `r`,
/// against reverse-mode gradients, on `samples` random leaf entries.
pub fn fd_tape(
    leaves: &[Tensor<f64>],
    build: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var, NnError>,
    samples: usize,
    seed: u64,
) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let output_len = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t)).collect();
        let out = build(&mut tape, &vars).unwrap();
        tape.value(out).len()
    };
    let r: Vec<f64> = (0..output_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let eval = |ls: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ls.iter().map(|t| tape.leaf(t)).collect();
        let out = build(&mut tape, &vars).unwrap();
        let loss = tape.weighted_sum(out, &r).unwrap();
        (tape, vars, loss)
    };
    let (tape, vars, loss) = eval(leaves);
    let grads = tape.backward(loss).unwrap();
    let value = |ls: &[Tensor<f64>]| {
        let (t, _, v) = eval(ls);
        t.value(v).data[0]
    };
    let mut report = FdReport::default();
    let choices: Vec<(usize, usize)> = leaves
        .iter()
        .enumerate()
        .flat_map(|(l, t)| (0..t.len()).map(move |i| (l, i)))
        .collect();
    for _ in 0..samples {
        let &(l, i) = choices.choose(&mut rng).unwrap();
        let analytic = grads.get_or_zero(vars[l], leaves[l].len())[i];
        let mut plus = leaves.to_vec();
        plus[l].data[i] += FD_STEP;
        let mut minus = leaves.to_vec();
        minus[l].data[i] -= FD_STEP;
        report.add(analytic, (value(&plus) - value(&minus)) / (2.0 * FD_STEP));
    }
    report
}

/// Central differences for a module's parameters and its input. Every
/// fourth sample perturbs the input instead of a parameter.
pub fn fd_module<M: Module<f64> + Clone>(
    model: &M,
    input: &Tensor<f64>,
    forward: impl Fn(&M, &mut Tape<f64>, Var, &mut Binder) -> Result<Var, NnError>,
    samples: usize,
    training: bool,
    seed: u64,
) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let output_len = {
        let mut tape = Tape::new();
        let xv = tape.leaf(input);
        let out = forward(model, &mut tape, xv, &mut Binder::new(training)).unwrap();
        tape.value(out).len()
    };
    let r: Vec<f64> = (0..output_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let run = |m: &M, x: &Tensor<f64>| {
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let mut bind = Binder::new(training);
        let out = forward(m, &mut tape, xv, &mut bind).unwrap();
        let loss = tape.weighted_sum(out, &r).unwrap();
        (tape, xv, bind, loss)
    };
    let value = |m: &M, x: &Tensor<f64>| {
        let (t, _, _, v) = run(m, x);
        t.value(v).data[0]
    };
    let (tape, xv, bind, loss) = run(model, input);
    let grads = tape.backward(loss).unwrap();
    let params = model.params();
    let mut report = FdReport::default();
    for s in 0..samples {
        if params.is_empty() || s % 4 == 3 {
            let i = rng.random_range(0..input.len());
            let analytic = grads.get_or_zero(xv, input.len())[i];
            let (mut xp, mut xm) = (input.clone(), input.clone());
            xp.data[i] += FD_STEP;
            xm.data[i] -= FD_STEP;
            report.add(analytic, (value(model, &xp) - value(model, &xm)) / (2.0 * FD_STEP));
        } else {
            let k = rng.random_range(0..params.len());
            let i = rng.random_range(0..params[k].len());
            let analytic = grads.get_or_zero(bind.vars[k], params[k].len())[i];
            let (mut mp, mut mm) = (model.clone(), model.clone());
            mp.params_mut()[k].data[i] += FD_STEP;
            mm.params_mut()[k].data[i] -= FD_STEP;
            report.add(analytic, (value(&mp, input) - value(&mm, input)) / (2.0 * FD_STEP));
        }
    }
    report
}

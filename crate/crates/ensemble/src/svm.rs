//! Linear SVM trained by stochastic subgradient descent on the L2-regularized
//! hinge loss, with Platt calibration.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{check_classes, check_data, EnsembleError};

/// Every `CALIBRATION_STRIDE`-th sample is held out for calibration.
pub const CALIBRATION_STRIDE: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    /// Initial step; step `t` is `eta0 / (1 + eta0·lambda·t)`.
    pub eta0: f64,
    /// Weight classes inversely to their frequency.
    pub balanced: bool,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-3,
            epochs: 30,
            eta0: 0.1,
            balanced: true,
            seed: 0,
        }
    }
}

/// `p = 1 / (1 + exp(a·f + b))` for decision value `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
}

impl Platt {
    /// Strictly inside (0, 1).
    pub fn probability(&self, f: f64) -> f64 {
        let z = self.a * f + self.b;
        let p = if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        };
        p.clamp(f64::EPSILON, 1.0 - f64::EPSILON)
    }

    /// Maximum-likelihood fit with smoothed targets, by Newton's method with
    /// backtracking (Lin, Lin and Weng's formulation).
    pub fn fit(decisions: &[f64], y: &[bool]) -> Platt {
        let prior1 = y.iter().filter(|&&v| v).count() as f64;
        let prior0 = y.len() as f64 - prior1;
        let hi = (prior1 + 1.0) / (prior1 + 2.0);
        let lo = 1.0 / (prior0 + 2.0);
        let t: Vec<f64> = y.iter().map(|&v| if v { hi } else { lo }).collect();
        let objective = |a: f64, b: f64| -> f64 {
            decisions
                .iter()
                .zip(&t)
                .map(|(&f, &ti)| {
                    let z = a * f + b;
                    if z >= 0.0 {
                        ti * z + (-z).exp().ln_1p()
                    } else {
                        (ti - 1.0) * z + z.exp().ln_1p()
                    }
                })
                .sum()
        };
        let (mut a, mut b) = (0.0, ((prior0 + 1.0) / (prior1 + 1.0)).ln());
        let mut fval = objective(a, b);
        let sigma = 1e-12;
        for _ in 0..100 {
            let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
            for (&f, &ti) in decisions.iter().zip(&t) {
                let z = a * f + b;
                let (p, q) = if z >= 0.0 {
                    let e = (-z).exp();
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                } else {
                    let e = z.exp();
                    (1.0 / (1.0 + e), e / (1.0 + e))
                };
                let d2 = p * q;
                h11 += f * f * d2;
                h22 += d2;
                h21 += f * d2;
                let d1 = ti - p;
                g1 += f * d1;
                g2 += d1;
            }
            if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
                break;
            }
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * g1 - h21 * g2) / det;
            let db = -(-h21 * g1 + h11 * g2) / det;
            let gd = g1 * da + g2 * db;
            let mut step = 1.0;
            let mut moved = false;
            while step >= 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = objective(na, nb);
                if nf < fval + 1e-4 * step * gd {
                    a = na;
                    b = nb;
                    fval = nf;
                    moved = true;
                    break;
                }
                step /= 2.0;
            }
            if !moved {
                break;
            }
        }
        Platt { a, b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub platt: Platt,
}

impl LinearSvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.platt.probability(self.decision(x))
    }
}

/// Fits on all but every fifth sample and calibrates on the held-out ones.
/// When either part lacks a class, both steps use every sample.
pub fn fit_linear_svm(x: &[&[f64]], y: &[bool], params: &SvmParams) -> Result<LinearSvm, EnsembleError> {
    check_data(x, y)?;
    check_classes(y)?;
    let (fit_idx, cal_idx): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|i| i % CALIBRATION_STRIDE != CALIBRATION_STRIDE - 1);
    let both = |idx: &[usize]| {
        let pos = idx.iter().filter(|&&i| y[i]).count();
        pos > 0 && pos < idx.len()
    };
    let (fit_idx, cal_idx) = if both(&fit_idx) && both(&cal_idx) {
        (fit_idx, cal_idx)
    } else {
        let all: Vec<usize> = (0..x.len()).collect();
        (all.clone(), all)
    };
    let (weights, bias) = hinge_sgd(x, y, &fit_idx, params);
    let mut svm = LinearSvm {
        weights,
        bias,
        platt: Platt { a: -1.0, b: 0.0 },
    };
    let decisions: Vec<f64> = cal_idx.iter().map(|&i| svm.decision(x[i])).collect();
    let cal_y: Vec<bool> = cal_idx.iter().map(|&i| y[i]).collect();
    svm.platt = Platt::fit(&decisions, &cal_y);
    Ok(svm)
}

fn hinge_sgd(x: &[&[f64]], y: &[bool], idx: &[usize], params: &SvmParams) -> (Vec<f64>, f64) {
    let d = x[0].len();
    let n = idx.len() as f64;
    let pos = idx.iter().filter(|&&i| y[i]).count() as f64;
    let (c_pos, c_neg) = if params.balanced {
        (n / (2.0 * pos), n / (2.0 * (n - pos)))
    } else {
        (1.0, 1.0)
    };
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order = idx.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut t = 0.0;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = params.eta0 / (1.0 + params.eta0 * params.lambda * t);
            t += 1.0;
            let (sign, c) = if y[i] { (1.0, c_pos) } else { (-1.0, c_neg) };
            let margin = sign * (x[i].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b);
            let decay = 1.0 - eta * params.lambda;
            for wj in &mut w {
                *wj *= decay;
            }
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(x[i]) {
                    *wj += eta * c * sign * xj;
                }
                b += eta * c * sign;
            }
        }
    }
    (w, b)
}

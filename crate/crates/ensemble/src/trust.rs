//! Confidence scores: feature stability under input jitter, weighted
//! classifier agreement, and their combination.

use crate::EnsembleError;

/// Sum of weights must be within this distance of one.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustScore {
    pub trust_densenet: f64,
    pub trust_ml: f64,
    pub global: f64,
}

impl TrustScore {
    pub fn new(trust_densenet: f64, trust_ml: f64) -> Self {
        TrustScore {
            trust_densenet,
            trust_ml,
            global: global_confidence(trust_densenet, trust_ml),
        }
    }
}

/// Per-dimension z-scoring with statistics from a reference set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; constant dimensions store 1.
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self, EnsembleError> {
        let d = rows.first().ok_or(EnsembleError::EmptyData)?.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(EnsembleError::DimMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
            if !s.is_finite() {
                return Err(EnsembleError::NonFinite);
            }
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, EnsembleError> {
        if x.len() != self.dim() {
            return Err(EnsembleError::DimMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }
}

/// `clamp(1 - mean_i σ_i, 0, 1)` with σ_i the population standard deviation
/// of dimension `i` across runs.
pub fn trust_densenet(runs: &[Vec<f64>]) -> Result<f64, EnsembleError> {
    if runs.len() < 2 {
        return Err(EnsembleError::TooFewRuns(runs.len()));
    }
    let d = runs[0].len();
    if d == 0 {
        return Err(EnsembleError::EmptyData);
    }
    for r in runs {
        if r.len() != d {
            return Err(EnsembleError::DimMismatch {
                expected: d,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(EnsembleError::NonFinite);
        }
    }
    let n = runs.len() as f64;
    let mut sigma_sum = 0.0;
    for i in 0..d {
        let mean = runs.iter().map(|r| r[i]).sum::<f64>() / n;
        let var = runs.iter().map(|r| (r[i] - mean) * (r[i] - mean)).sum::<f64>() / n;
        sigma_sum += var.sqrt();
    }
    let t = 1.0 - sigma_sum / d as f64;
    if !t.is_finite() {
        return Err(EnsembleError::NonFinite);
    }
    Ok(t.clamp(0.0, 1.0))
}

/// `Σ α_i p_i`. Pairs are summed in ascending `(p, α)` order so the result
/// does not depend on how they are listed, and the result is clamped to
/// `[min p, max p]` against rounding.
pub fn trust_ml(p: &[f64], alpha: &[f64]) -> Result<f64, EnsembleError> {
    if p.is_empty() || p.len() != alpha.len() {
        return Err(EnsembleError::BadWeights);
    }
    if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(EnsembleError::BadWeights);
    }
    if (alpha.iter().sum::<f64>() - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(EnsembleError::BadWeights);
    }
    if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(EnsembleError::BadProbability(bad));
    }
    let mut pairs: Vec<(f64, f64)> = p.iter().copied().zip(alpha.iter().copied()).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let total = pairs.iter().fold(0.0, |acc, (pi, ai)| acc + ai * pi);
    let lo = pairs.first().map_or(0.0, |x| x.0);
    let hi = pairs.last().map_or(1.0, |x| x.0);
    Ok(total.clamp(lo, hi))
}

/// Unweighted mean of the two components.
pub fn global_confidence(trust_densenet: f64, trust_ml: f64) -> f64 {
    weighted_confidence(trust_densenet, trust_ml, 0.5)
}

/// `w·trust_densenet + (1 - w)·trust_ml`, clamped to [0, 1].
pub fn weighted_confidence(trust_densenet: f64, trust_ml: f64, w: f64) -> f64 {
    let w = w.clamp(0.0, 1.0);
    (w * trust_densenet + (1.0 - w) * trust_ml).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizer_handles_constant_dimensions() {
        let a = [1.0, 5.0];
        let b = [3.0, 5.0];
        let s = Standardizer::fit(&[&a, &b]).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        assert_eq!(s.transform(&[3.0, 5.0]).unwrap(), vec![1.0, 0.0]);
        assert!(s.transform(&[1.0]).is_err());
    }

    #[test]
    fn trust_ml_rejects_bad_inputs() {
        assert_eq!(trust_ml(&[0.5, 0.5], &[0.6, 0.6]), Err(EnsembleError::BadWeights));
        assert_eq!(trust_ml(&[0.5, 0.5], &[1.5, -0.5]), Err(EnsembleError::BadWeights));
        assert_eq!(trust_ml(&[0.5], &[0.5, 0.5]), Err(EnsembleError::BadWeights));
        assert_eq!(trust_ml(&[1.5, 0.5], &[0.5, 0.5]), Err(EnsembleError::BadProbability(1.5)));
    }
}

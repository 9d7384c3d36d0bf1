//! Fingerprint baselines: a random forest and a two-layer perceptron on
//! ECFP4 bits.

use rayon::prelude::*;
use toxpipe_core::morgan_fingerprint;
use toxpipe_ensemble::{fit_random_forest, EnsembleError, ForestParams, RandomForest};
use toxpipe_nn::{Mlp, NnError, TrainConfig};

use crate::assays::N_ASSAYS;
use crate::dataset::DatasetRecord;

pub const FP_BITS: usize = 2048;
pub const FP_RADIUS: usize = 2;

/// Dense 0/1 ECFP4 rows of the desalted molecules.
pub fn fingerprint_rows(records: &[DatasetRecord], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.par_iter()
        .map(|&i| {
            morgan_fingerprint(&records[i].molecule.desalt(), FP_RADIUS, FP_BITS)
                .map(|fp| fp.to_dense())
                .unwrap_or_else(|_| vec![0.0; FP_BITS])
        })
        .collect()
}

/// One forest per assay; `None` where the training labels hold a single
/// class.
#[derive(Debug, Clone)]
pub struct FingerprintForest {
    pub forests: Vec<Option<RandomForest>>,
}

impl FingerprintForest {
    pub fn fit(records: &[DatasetRecord], train_idx: &[usize], params: &ForestParams) -> Result<Self, EnsembleError> {
        let x = fingerprint_rows(records, train_idx);
        let forests = (0..N_ASSAYS)
            .into_par_iter()
            .map(|k| {
                let (rows, y): (Vec<&[f64]>, Vec<bool>) = train_idx
                    .iter()
                    .zip(&x)
                    .filter_map(|(&i, row)| records[i].labels[k].map(|l| (row.as_slice(), l)))
                    .unzip();
                let p = ForestParams {
                    seed: params.seed.wrapping_add(k as u64),
                    ..params.clone()
                };
                match fit_random_forest(&rows, &y, &p) {
                    Ok(f) => Ok(Some(f)),
                    Err(EnsembleError::SingleClassLabel { .. }) | Err(EnsembleError::EmptyData) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FingerprintForest { forests })
    }

    /// Positive-class probability per record and assay; `None` for assays
    /// without a forest.
    pub fn predict(&self, records: &[DatasetRecord], idx: &[usize]) -> Vec<[Option<f64>; N_ASSAYS]> {
        fingerprint_rows(records, idx)
            .iter()
            .map(|row| {
                let mut out = [None; N_ASSAYS];
                for (k, f) in self.forests.iter().enumerate() {
                    out[k] = f.as_ref().map(|f| f.predict_proba(row));
                }
                out
            })
            .collect()
    }
}

/// Multi-label perceptron on fingerprints with the masked loss.
pub fn fit_fingerprint_mlp(
    records: &[DatasetRecord],
    train_idx: &[usize],
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<Mlp<f32>, NnError> {
    let x: Vec<Vec<f32>> = fingerprint_rows(records, train_idx)
        .into_iter()
        .map(|r| r.into_iter().map(|v| v as f32).collect())
        .collect();
    let labels: Vec<Vec<f32>> = train_idx
        .iter()
        .map(|&i| records[i].labels.iter().map(|l| if *l == Some(true) { 1.0 } else { 0.0 }).collect())
        .collect();
    let mask: Vec<Vec<bool>> = train_idx.iter().map(|&i| records[i].labels.iter().map(Option::is_some).collect()).collect();
    let mut mlp = Mlp::new(FP_BITS, hidden, N_ASSAYS, cfg.seed);
    mlp.fit(&x, &labels, &mask, cfg)?;
    Ok(mlp)
}

pub fn predict_fingerprint_mlp(mlp: &Mlp<f32>, records: &[DatasetRecord], idx: &[usize]) -> Result<Vec<Vec<f64>>, NnError> {
    let x: Vec<Vec<f32>> = fingerprint_rows(records, idx)
        .into_iter()
        .map(|r| r.into_iter().map(|v| v as f32).collect())
        .collect();
    mlp.predict_proba(&x)
}

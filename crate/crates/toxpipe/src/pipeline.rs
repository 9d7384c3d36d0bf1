//! Training, evaluation and prediction on top of the network and ensemble.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;
use toxpipe_core::depict::{augment, depict, StructImage};
use toxpipe_core::{parse, DepictError, SmilesError};
use toxpipe_ensemble::{
    trust::weighted_confidence, trust_densenet, ClassifierKind, EnsembleError, EnsembleModel, EnsembleParams,
    Standardizer,
};
use toxpipe_nn::{gradcam, overlay, train_from, DenseNet, LabeledImage, Module, NnError, TrainConfig};

use crate::assays::{Labels, ASSAYS, N_ASSAYS};
use crate::bundle::{BundleError, ModelBundle, TrainingMeta};
use crate::config::{ConfigError, PipelineConfig};
use crate::dataset::{dataset_hash, DatasetRecord};
use crate::metrics::{assay_metrics, AssayMetrics, MetricsError};
use crate::report::{AssayPrediction, PredictionReport};
use crate::split::{split, Split, SplitError};

/// Images per forward pass during feature extraction.
pub const EXTRACT_BATCH: usize = 16;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot parse SMILES `{smiles}`: {source}")]
    ParseFailure { smiles: String, source: SmilesError },
    #[error("cannot depict molecule: {0}")]
    Depict(#[from] DepictError),
    #[error(transparent)]
    BundleCorrupt(#[from] BundleError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("training split is empty")]
    EmptyTrainingSet,
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

type Result<T> = std::result::Result<T, PipelineError>;

/// Independent sub-seeds for the stages of one training run.
fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_add(stage.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

fn render(record: &DatasetRecord, size: usize) -> Result<StructImage> {
    Ok(record.image(size)?)
}

/// Renders records in parallel, in input order.
pub fn render_records(records: &[DatasetRecord], idx: &[usize], size: usize) -> Result<Vec<StructImage>> {
    idx.par_iter().map(|&i| render(&records[i], size)).collect()
}

/// Pooled network features of each image, in input order.
pub fn extract_features(net: &DenseNet<f32>, images: &[StructImage]) -> Result<Vec<Vec<f64>>> {
    let batches: Vec<Vec<Vec<f64>>> = images
        .par_chunks(EXTRACT_BATCH)
        .map(|chunk| {
            let refs: Vec<&StructImage> = chunk.iter().collect();
            let feats = net.extract(&refs)?;
            Ok(feats.into_iter().map(|f| f.into_iter().map(f64::from).collect()).collect())
        })
        .collect::<Result<_>>()?;
    Ok(batches.into_iter().flatten().collect())
}

/// Features of the given records, rendering one batch at a time.
pub fn record_features(net: &DenseNet<f32>, records: &[DatasetRecord], idx: &[usize]) -> Result<Vec<Vec<f64>>> {
    let size = net.config.input_size;
    let batches: Vec<Vec<Vec<f64>>> = idx
        .par_chunks(EXTRACT_BATCH)
        .map(|chunk| {
            let images = chunk.iter().map(|&i| render(&records[i], size)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&StructImage> = images.iter().collect();
            let feats = net.extract(&refs)?;
            Ok(feats.into_iter().map(|f| f.into_iter().map(f64::from).collect()).collect())
        })
        .collect::<Result<_>>()?;
    Ok(batches.into_iter().flatten().collect())
}

fn labeled(record: &DatasetRecord, size: usize) -> Result<LabeledImage> {
    Ok(LabeledImage {
        image: render(record, size)?,
        labels: record.labels.iter().map(|l| if *l == Some(true) { 1.0 } else { 0.0 }).collect(),
        mask: record.labels.iter().map(Option::is_some).collect(),
    })
}

/// Trains the network on `train_idx`, then the classifiers on its
/// standardized features. `log` receives progress lines.
pub fn fit(
    records: &[DatasetRecord],
    train_idx: &[usize],
    cfg: &PipelineConfig,
    mut log: impl FnMut(&str),
) -> Result<ModelBundle> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(PipelineError::EmptyTrainingSet);
    }
    let size = cfg.network.input_size;
    let mut network = DenseNet::<f32>::new(cfg.network.clone(), stage_seed(cfg.seed, 1))?;
    let tcfg = TrainConfig {
        seed: stage_seed(cfg.seed, 2),
        ..cfg.train.clone()
    };
    let loss_history = train_from(
        &mut network,
        train_idx.len(),
        &tcfg,
        |chunk: &[usize]| -> Result<Vec<LabeledImage>> {
            chunk.par_iter().map(|&j| labeled(&records[train_idx[j]], size)).collect()
        },
        |epoch, loss| log(&format!("epoch {} loss {loss:.6}", epoch + 1)),
    )?;
    // Gradient buffers are scratch space and are not persisted.
    for p in network.params_mut() {
        p.grad = None;
    }

    let raw = record_features(&network, records, train_idx)?;
    let rows: Vec<&[f64]> = raw.iter().map(Vec::as_slice).collect();
    let standardizer = Standardizer::fit(&rows)?;
    let features = raw.iter().map(|f| standardizer.transform(f)).collect::<std::result::Result<Vec<_>, _>>()?;
    let rows: Vec<&[f64]> = features.iter().map(Vec::as_slice).collect();
    let labels: Vec<Vec<Option<bool>>> = train_idx.iter().map(|&i| records[i].labels.to_vec()).collect();
    let params = EnsembleParams {
        seed: stage_seed(cfg.seed, 3),
        ..cfg.ensemble.clone()
    };
    let ensemble = EnsembleModel::fit(&rows, &labels, &params)?;
    for (k, name) in ASSAYS.iter().enumerate() {
        if !ensemble.is_trained(k) {
            log(&format!("{name}: training labels hold one class, using prevalence"));
        }
    }
    Ok(ModelBundle {
        config: cfg.clone(),
        network,
        ensemble,
        standardizer,
        meta: TrainingMeta {
            seed: cfg.seed,
            epochs: cfg.train.epochs,
            dataset_hash: dataset_hash(records),
            n_train: train_idx.len(),
            loss_history,
        },
    })
}

/// Splits the records by the configured fractions and seed, then fits on
/// the training part.
pub fn train(records: &[DatasetRecord], cfg: &PipelineConfig, log: impl FnMut(&str)) -> Result<(ModelBundle, Split)> {
    let labels: Vec<Labels> = records.iter().map(|r| r.labels).collect();
    let parts = split(&labels, cfg.seed, cfg.split)?;
    let bundle = fit(records, &parts.train, cfg, log)?;
    Ok((bundle, parts))
}

/// The split a bundle was trained with, if `records` is its dataset.
pub fn bundle_split(bundle: &ModelBundle, records: &[DatasetRecord]) -> Option<Split> {
    if dataset_hash(records) != bundle.meta.dataset_hash {
        return None;
    }
    let labels: Vec<Labels> = records.iter().map(|r| r.labels).collect();
    split(&labels, bundle.config.seed, bundle.config.split).ok()
}

/// One assay's outcome for one molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct AssayOutcome {
    pub active: bool,
    pub probability: f64,
    /// Per-classifier probabilities in [`ClassifierKind::ALL`] order.
    pub members: Option<[f64; 3]>,
    pub trust_ml: Option<f64>,
}

/// Ensemble outcome for every assay from standardized features.
pub fn decide_all(bundle: &ModelBundle, features: &[f64]) -> Result<Vec<AssayOutcome>> {
    let ens = &bundle.ensemble;
    (0..N_ASSAYS)
        .map(|k| {
            if !ens.is_trained(k) {
                let p = ens.prevalence.get(k).copied().unwrap_or(0.0);
                return Ok(AssayOutcome {
                    active: p > 0.5,
                    probability: p,
                    members: None,
                    trust_ml: None,
                });
            }
            let members = ens.predict_label(k, features)?;
            let d = ens.decide(k, features)?;
            Ok(AssayOutcome {
                active: d.active,
                probability: d.probability,
                members: Some(members),
                trust_ml: Some(d.trust_ml),
            })
        })
        .collect()
}

/// Outcomes for the given records, in order.
pub fn predict_records(bundle: &ModelBundle, records: &[DatasetRecord], idx: &[usize]) -> Result<Vec<Vec<AssayOutcome>>> {
    let raw = record_features(&bundle.network, records, idx)?;
    raw.par_iter()
        .map(|f| decide_all(bundle, &bundle.standardizer.transform(f)?))
        .collect()
}

/// Per-assay metrics over `idx`; assays with no labeled record are skipped.
/// Fails only when no assay can be evaluated.
pub fn evaluate(bundle: &ModelBundle, records: &[DatasetRecord], idx: &[usize]) -> Result<Vec<AssayMetrics>> {
    let outcomes = predict_records(bundle, records, idx)?;
    let mut rows = Vec::new();
    for k in 0..N_ASSAYS {
        let mut verdicts = Vec::new();
        let mut scores = Vec::new();
        let mut truth = Vec::new();
        for (o, &i) in outcomes.iter().zip(idx) {
            if let Some(t) = records[i].labels[k] {
                verdicts.push(o[k].active);
                scores.push(o[k].probability);
                truth.push(t);
            }
        }
        match assay_metrics(k, &verdicts, &scores, &truth) {
            Ok(m) => rows.push(m),
            Err(MetricsError::NoEvaluableRecords(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if rows.is_empty() {
        return Err(MetricsError::NoEvaluableRecords(0).into());
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictOptions {
    /// Directory for per-assay Grad-CAM overlays; none are written if unset.
    pub explain_dir: Option<PathBuf>,
    /// Augmented renderings for the feature-spread score; the bundle's
    /// setting when unset.
    pub augment_runs: Option<usize>,
    /// Keys the augmentation jitter.
    pub seed: u64,
}

/// Blend weight of the Grad-CAM colormap over the structure image.
pub const OVERLAY_ALPHA: f64 = 0.5;

/// Renders the desalted molecule at the network's input size.
pub fn smiles_image(bundle: &ModelBundle, smiles: &str) -> Result<StructImage> {
    let mol = parse(smiles).map_err(|source| PipelineError::ParseFailure {
        smiles: smiles.to_string(),
        source,
    })?;
    Ok(depict(&mol.desalt(), bundle.network.config.input_size)?)
}

/// Grad-CAM overlay for one assay, written as PNG.
pub fn write_explanation(bundle: &ModelBundle, image: &StructImage, assay: usize, path: &Path) -> Result<()> {
    let cam = gradcam(&bundle.network, image, assay)?;
    let heat = cam.heatmap.upsample(image.width, image.height);
    let img = overlay(&heat, image, OVERLAY_ALPHA)?;
    img.save_png(path).map_err(|e| PipelineError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn predict_report(bundle: &ModelBundle, smiles: &str, opts: &PredictOptions) -> Result<PredictionReport> {
    let image = smiles_image(bundle, smiles)?;
    let runs = opts.augment_runs.unwrap_or(bundle.config.augment_runs);
    let mut images = Vec::with_capacity(runs + 1);
    images.push(image.clone());
    images.extend((0..runs as u64).map(|r| augment(&image, opts.seed.wrapping_add(r))));
    let feats = extract_features(&bundle.network, &images)?
        .iter()
        .map(|f| bundle.standardizer.transform(f))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let td = trust_densenet(&feats[1..])?;
    let outcomes = decide_all(bundle, &feats[0])?;

    let agreements: Vec<f64> = outcomes.iter().filter_map(|o| o.trust_ml).collect();
    let tm = if agreements.is_empty() {
        0.0
    } else {
        agreements.iter().sum::<f64>() / agreements.len() as f64
    };
    let mut assays = Vec::with_capacity(N_ASSAYS);
    for (k, o) in outcomes.iter().enumerate() {
        let heatmap = match &opts.explain_dir {
            Some(dir) => {
                let path = dir.join(format!("{k:02}_{}.png", ASSAYS[k]));
                write_explanation(bundle, &image, k, &path)?;
                Some(path.display().to_string())
            }
            None => None,
        };
        let member = |c: ClassifierKind| o.members.map(|m| m[ClassifierKind::ALL.iter().position(|&x| x == c).expect("kind")]);
        assays.push(AssayPrediction {
            assay: ASSAYS[k].to_string(),
            active: o.active,
            probability: o.probability,
            trained: o.members.is_some(),
            svm: member(ClassifierKind::Svm),
            random_forest: member(ClassifierKind::Forest),
            gbm: member(ClassifierKind::Gbm),
            trust_ml: o.trust_ml,
            heatmap,
        });
    }
    Ok(PredictionReport {
        smiles: smiles.to_string(),
        assays,
        trust_densenet: td,
        trust_ml: tm,
        global_confidence: weighted_confidence(td, tm, bundle.config.confidence_weight),
    })
}

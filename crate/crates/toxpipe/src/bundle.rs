//! Binary model bundle.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TOXB" | version: u32 | section* | checksum: u64
//! section = tag: [u8; 4] | length: u64 | payload
//! ```
//!
//! Sections are `CONF` (config text), `NETW` (network tensors), `ENSM`
//! (classifiers), `STDZ` (feature standardization) and `META` (training
//! metadata). The checksum is the first eight bytes of the SHA-256 of
//! everything before it, read as a little-endian u64.

use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toxpipe_ensemble::{
    DecisionTree, EnsembleModel, Gbm, LabelModel, LinearSvm, Node, Platt, RandomForest, Standardizer, TieBreak,
};
use toxpipe_nn::{DenseNet, Module};

use crate::config::PipelineConfig;

pub const MAGIC: &[u8; 4] = b"TOXB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BundleError {
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("unsupported bundle format: {0}")]
    VersionUnsupported(String),
    #[error("bundle is truncated")]
    TruncatedFile,
    #[error("bundle is corrupt: {0}")]
    Corrupt(String),
    #[error("cannot access bundle: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    /// See [`crate::dataset::dataset_hash`].
    pub dataset_hash: String,
    pub n_train: usize,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: PipelineConfig,
    pub network: DenseNet<f32>,
    pub ensemble: EnsembleModel,
    pub standardizer: Standardizer,
    pub meta: TrainingMeta,
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

// Writing into a Vec cannot fail, so the io::Result values are dropped.
struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        let _ = self.0.write_u32::<LE>(v);
    }
    fn u64(&mut self, v: u64) {
        let _ = self.0.write_u64::<LE>(v);
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        let _ = self.0.write_f64::<LE>(v);
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        for &x in v {
            self.f64(x);
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.usize(b.len());
        self.0.extend_from_slice(b);
    }
    fn section(&mut self, tag: &[u8; 4], body: Out) {
        self.0.extend_from_slice(tag);
        self.bytes(&body.0);
    }
}

struct In<'a>(&'a [u8]);

type R<T> = Result<T, BundleError>;

impl<'a> In<'a> {
    fn u8(&mut self) -> R<u8> {
        self.0.read_u8().map_err(|_| BundleError::TruncatedFile)
    }
    fn u32(&mut self) -> R<u32> {
        self.0.read_u32::<LE>().map_err(|_| BundleError::TruncatedFile)
    }
    fn u64(&mut self) -> R<u64> {
        self.0.read_u64::<LE>().map_err(|_| BundleError::TruncatedFile)
    }
    fn f64(&mut self) -> R<f64> {
        self.0.read_f64::<LE>().map_err(|_| BundleError::TruncatedFile)
    }
    /// A count of items each at least `min_size` bytes long; rejects counts
    /// the remaining input cannot hold before anything is allocated.
    fn count(&mut self, min_size: usize) -> R<usize> {
        let n = self.u64()?;
        if n > (self.0.len() / min_size.max(1)) as u64 {
            return Err(BundleError::TruncatedFile);
        }
        Ok(n as usize)
    }
    fn f64s(&mut self) -> R<Vec<f64>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn bytes(&mut self) -> R<&'a [u8]> {
        let n = self.count(1)?;
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }
    fn take(&mut self, n: usize) -> R<&'a [u8]> {
        if n > self.0.len() {
            return Err(BundleError::TruncatedFile);
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }
    fn finish(&self, what: &str) -> R<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(corrupt(format!("{} trailing bytes in {what}", self.0.len())))
        }
    }
}

fn corrupt(msg: impl Into<String>) -> BundleError {
    BundleError::Corrupt(msg.into())
}

fn write_network(out: &mut Out, net: &DenseNet<f32>) {
    out.u8(u8::from(net.head.is_some()));
    let state = net.state();
    out.usize(state.len());
    for t in state {
        out.usize(t.shape.len());
        for &d in &t.shape {
            out.usize(d);
        }
        out.usize(t.data.len());
        for &v in &t.data {
            let _ = out.0.write_f32::<LE>(v);
        }
    }
}

fn read_network(inp: &mut In, config: &PipelineConfig) -> R<DenseNet<f32>> {
    let mut net = DenseNet::<f32>::new(config.network.clone(), 0).map_err(|e| corrupt(e.to_string()))?;
    match inp.u8()? {
        0 => net.head = None,
        1 => {}
        v => return Err(corrupt(format!("bad head flag {v}"))),
    }
    let n = inp.count(16)?;
    let mut state = net.state_mut();
    if n != state.len() {
        return Err(corrupt(format!("network has {} tensors, bundle {n}", state.len())));
    }
    for t in state.iter_mut() {
        let rank = inp.count(8)?;
        let shape = (0..rank).map(|_| inp.u64().map(|d| d as usize)).collect::<R<Vec<_>>>()?;
        if shape != t.shape {
            return Err(corrupt(format!("tensor shape {shape:?}, expected {:?}", t.shape)));
        }
        let len = inp.count(4)?;
        if len != t.data.len() {
            return Err(corrupt("tensor length disagrees with its shape"));
        }
        let raw = inp.take(len * 4)?;
        let mut r = raw;
        for v in t.data.iter_mut() {
            *v = r.read_f32::<LE>().map_err(|_| BundleError::TruncatedFile)?;
        }
    }
    Ok(net)
}

fn write_tree(out: &mut Out, tree: &DecisionTree) {
    match tree.max_depth {
        None => out.u8(0),
        Some(d) => {
            out.u8(1);
            out.usize(d);
        }
    }
    out.usize(tree.nodes.len());
    for node in &tree.nodes {
        match *node {
            Node::Leaf { value } => {
                out.u8(0);
                out.f64(value);
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                out.u8(1);
                out.usize(feature);
                out.f64(threshold);
                out.usize(left);
                out.usize(right);
            }
        }
    }
}

fn read_tree(inp: &mut In, n_features: usize) -> R<DecisionTree> {
    let max_depth = match inp.u8()? {
        0 => None,
        1 => Some(inp.u64()? as usize),
        v => return Err(corrupt(format!("bad depth flag {v}"))),
    };
    let n = inp.count(9)?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        nodes.push(match inp.u8()? {
            0 => Node::Leaf { value: inp.f64()? },
            1 => Node::Split {
                feature: inp.u64()? as usize,
                threshold: inp.f64()?,
                left: inp.u64()? as usize,
                right: inp.u64()? as usize,
            },
            v => return Err(corrupt(format!("bad node tag {v}"))),
        });
    }
    let tree = DecisionTree { nodes, max_depth };
    if !tree.is_valid(n_features) {
        return Err(corrupt("malformed decision tree"));
    }
    Ok(tree)
}

fn write_trees(out: &mut Out, trees: &[DecisionTree]) {
    out.usize(trees.len());
    for t in trees {
        write_tree(out, t);
    }
}

fn read_trees(inp: &mut In, n_features: usize) -> R<Vec<DecisionTree>> {
    let n = inp.count(9)?;
    (0..n).map(|_| read_tree(inp, n_features)).collect()
}

fn write_ensemble(out: &mut Out, m: &EnsembleModel) {
    out.usize(m.n_features);
    for a in m.alpha {
        out.f64(a);
    }
    out.u8(match m.tie {
        TieBreak::Inactive => 0,
        TieBreak::Active => 1,
    });
    out.f64s(&m.prevalence);
    out.usize(m.labels.len());
    for label in &m.labels {
        let Some(l) = label else {
            out.u8(0);
            continue;
        };
        out.u8(1);
        out.f64s(&l.svm.weights);
        out.f64(l.svm.bias);
        out.f64(l.svm.platt.a);
        out.f64(l.svm.platt.b);
        write_trees(out, &l.forest.trees);
        out.f64(l.gbm.base_score);
        out.f64(l.gbm.learning_rate);
        write_trees(out, &l.gbm.trees);
        out.f64s(&l.gbm.shrinkage);
    }
}

fn read_ensemble(inp: &mut In) -> R<EnsembleModel> {
    let n_features = inp.u64()? as usize;
    let alpha = [inp.f64()?, inp.f64()?, inp.f64()?];
    let tie = match inp.u8()? {
        0 => TieBreak::Inactive,
        1 => TieBreak::Active,
        v => return Err(corrupt(format!("bad tie-break {v}"))),
    };
    let prevalence = inp.f64s()?;
    let n = inp.count(1)?;
    if n != prevalence.len() {
        return Err(corrupt("label count disagrees with prevalence"));
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        if inp.u8()? == 0 {
            labels.push(None);
            continue;
        }
        let weights = inp.f64s()?;
        if weights.len() != n_features {
            return Err(corrupt("svm weight length disagrees with feature count"));
        }
        let svm = LinearSvm {
            weights,
            bias: inp.f64()?,
            platt: Platt {
                a: inp.f64()?,
                b: inp.f64()?,
            },
        };
        let forest = RandomForest {
            trees: read_trees(inp, n_features)?,
        };
        let base_score = inp.f64()?;
        let learning_rate = inp.f64()?;
        let trees = read_trees(inp, n_features)?;
        let shrinkage = inp.f64s()?;
        if shrinkage.len() != trees.len() {
            return Err(corrupt("gbm shrinkage length disagrees with tree count"));
        }
        let gbm = Gbm {
            base_score,
            learning_rate,
            trees,
            shrinkage,
        };
        labels.push(Some(LabelModel { svm, forest, gbm }));
    }
    Ok(EnsembleModel {
        n_features,
        labels,
        prevalence,
        alpha,
        tie,
    })
}

pub fn encode(bundle: &ModelBundle) -> Vec<u8> {
    let mut out = Out(Vec::new());
    out.0.extend_from_slice(MAGIC);
    out.u32(FORMAT_VERSION);

    let mut conf = Out(Vec::new());
    conf.0.extend_from_slice(bundle.config.to_text().as_bytes());
    out.section(b"CONF", conf);

    let mut netw = Out(Vec::new());
    write_network(&mut netw, &bundle.network);
    out.section(b"NETW", netw);

    let mut ensm = Out(Vec::new());
    write_ensemble(&mut ensm, &bundle.ensemble);
    out.section(b"ENSM", ensm);

    let mut stdz = Out(Vec::new());
    stdz.f64s(&bundle.standardizer.mean);
    stdz.f64s(&bundle.standardizer.std);
    out.section(b"STDZ", stdz);

    let mut meta = Out(Vec::new());
    let m = &bundle.meta;
    meta.u64(m.seed);
    meta.usize(m.epochs);
    meta.bytes(m.dataset_hash.as_bytes());
    meta.usize(m.n_train);
    meta.f64s(&m.loss_history);
    out.section(b"META", meta);

    let sum = checksum(&out.0);
    out.u64(sum);
    out.0
}

/// Checksum stored in the encoded bundle, as hex.
pub fn bundle_checksum(bundle: &ModelBundle) -> String {
    let bytes = encode(bundle);
    format!("{:016x}", u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8 bytes")))
}

pub fn decode(bytes: &[u8]) -> Result<ModelBundle, BundleError> {
    if bytes.len() < 4 {
        return Err(BundleError::TruncatedFile);
    }
    if &bytes[..4] != MAGIC {
        return Err(BundleError::VersionUnsupported(format!("bad magic {:02x?}", &bytes[..4])));
    }
    if bytes.len() < 16 {
        return Err(BundleError::TruncatedFile);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let computed = checksum(body);
    if stored != computed {
        return Err(BundleError::ChecksumMismatch { stored, computed });
    }
    let mut inp = In(&body[4..]);
    let version = inp.u32()?;
    if version != FORMAT_VERSION {
        return Err(BundleError::VersionUnsupported(format!("format version {version}")));
    }
    let mut sections: Vec<([u8; 4], &[u8])> = Vec::new();
    while !inp.0.is_empty() {
        let tag: [u8; 4] = inp.take(4)?.try_into().expect("4 bytes");
        let payload = inp.bytes()?;
        if sections.iter().any(|(t, _)| *t == tag) {
            return Err(corrupt(format!("section {} repeated", String::from_utf8_lossy(&tag))));
        }
        sections.push((tag, payload));
    }
    let section = |tag: &[u8; 4]| -> R<In> {
        sections
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, p)| In(p))
            .ok_or_else(|| corrupt(format!("missing section {}", String::from_utf8_lossy(tag))))
    };

    let conf = section(b"CONF")?;
    let text = std::str::from_utf8(conf.0).map_err(|_| corrupt("config is not UTF-8"))?;
    let config = PipelineConfig::parse(text).map_err(|e| corrupt(e.to_string()))?;

    let mut netw = section(b"NETW")?;
    let network = read_network(&mut netw, &config)?;
    netw.finish("NETW")?;

    let mut ensm = section(b"ENSM")?;
    let ensemble = read_ensemble(&mut ensm)?;
    ensm.finish("ENSM")?;
    if ensemble.n_features != network.feature_dim() {
        return Err(corrupt("classifier feature count disagrees with the network"));
    }

    let mut stdz = section(b"STDZ")?;
    let standardizer = Standardizer {
        mean: stdz.f64s()?,
        std: stdz.f64s()?,
    };
    stdz.finish("STDZ")?;
    if standardizer.mean.len() != ensemble.n_features || standardizer.std.len() != ensemble.n_features {
        return Err(corrupt("standardizer dimension disagrees with the network"));
    }

    let mut meta = section(b"META")?;
    let seed = meta.u64()?;
    let epochs = meta.u64()? as usize;
    let hash = meta.bytes()?;
    let dataset_hash = String::from_utf8(hash.to_vec()).map_err(|_| corrupt("dataset hash is not UTF-8"))?;
    let n_train = meta.u64()? as usize;
    let loss_history = meta.f64s()?;
    meta.finish("META")?;

    Ok(ModelBundle {
        config,
        network,
        ensemble,
        standardizer,
        meta: TrainingMeta {
            seed,
            epochs,
            dataset_hash,
            n_train,
            loss_history,
        },
    })
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<(), BundleError> {
    std::fs::write(path, encode(bundle)).map_err(|e| BundleError::Io(format!("{}: {e}", path.display())))
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle, BundleError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| BundleError::Io(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}

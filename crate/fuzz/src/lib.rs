//! Checks shared by the fuzz targets and the corpus replay test. Each one
//! must not panic on any input; the asserts are invariants that hold
//! whenever the input is accepted.

use sha2::{Digest, Sha256};
use toxpipe::bundle::{decode, encode};
use toxpipe::config::PipelineConfig;
use toxpipe::dataset::read_tox21_csv;
use toxpipe_core::{layout2d, morgan_fingerprint, parse};

pub fn smiles_parse(data: &[u8]) {
    // Long inputs only slow the fuzzer down in layout.
    let Ok(s) = std::str::from_utf8(data) else { return };
    if s.len() > 200 {
        return;
    }
    let Ok(mol) = parse(s) else { return };
    let main = mol.desalt();
    assert!(main.atom_count() <= mol.atom_count());
    let fp = morgan_fingerprint(&mol, 2, 256).expect("parsed molecules fingerprint");
    assert_eq!(fp.to_hex().len(), 64);
    if let Ok(layout) = layout2d(&main) {
        assert_eq!(layout.coords.len(), main.atom_count());
        assert!(layout.coords.iter().all(|c| c.iter().all(|v| v.is_finite())));
    }
}

pub fn csv_load(data: &[u8]) {
    if let Ok(d) = read_tox21_csv(data) {
        assert_eq!(d.rows_in, d.records.len() + d.quarantine.len());
        assert!(d.records.iter().all(|r| r.labels.iter().any(Option::is_some)));
    }
}

/// Decodes the input as is, then again with a valid trailer so the fuzzer
/// reaches past the checksum.
pub fn bundle_decode(data: &[u8]) {
    let body = &data[..data.len().saturating_sub(8)];
    let mut sealed = body.to_vec();
    sealed.extend_from_slice(&Sha256::digest(body)[..8]);
    for bytes in [data, &sealed] {
        if let Ok(b) = decode(bytes) {
            let again = encode(&b);
            assert_eq!(encode(&decode(&again).expect("re-encoded bundle decodes")), again);
        }
    }
}

pub fn config_parse(data: &[u8]) {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = PipelineConfig::parse(s) {
        let text = cfg.to_text();
        assert_eq!(PipelineConfig::parse(&text).as_ref().map(PipelineConfig::to_text), Ok(text));
    }
}

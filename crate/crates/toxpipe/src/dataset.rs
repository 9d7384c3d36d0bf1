//! Tox21 CSV ingestion.

use std::io::Read;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;
use toxpipe_core::depict::{depict, layout2d, StructImage};
use toxpipe_core::{parse, DepictError, Molecule};

use crate::assays::{assay_index, Labels, ASSAYS, N_ASSAYS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("header has no `smiles` column")]
    MissingSmilesColumn,
    #[error("header names none of the assay columns")]
    NoAssayColumns,
    #[error("malformed row at line {0}")]
    MalformedRow(usize),
    #[error("cannot read dataset: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    /// Line in the source file (the header is line 1).
    pub line: usize,
    pub smiles: String,
    pub labels: Labels,
    pub molecule: Molecule,
}

impl DatasetRecord {
    /// Renders the largest fragment.
    pub fn image(&self, size: usize) -> Result<StructImage, DepictError> {
        depict(&self.molecule.desalt(), size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quarantined {
    pub line: usize,
    pub smiles: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
    pub quarantine: Vec<Quarantined>,
    /// Data rows read; always `records.len() + quarantine.len()`.
    pub rows_in: usize,
    /// Assay columns present in the header, as panel indices.
    pub assays: Vec<usize>,
}

pub fn load_tox21_csv(path: &Path) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    read_tox21_csv(file)
}

/// Empty cells are missing labels; `0`/`1` (also `0.0`/`1.0`) are inactive
/// and active. Rows whose SMILES fails to parse or depict, or that carry no
/// label at all, are quarantined with a reason.
pub fn read_tox21_csv<R: Read>(reader: R) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(&e, 1))?.clone();
    let smiles_col = header
        .iter()
        .position(|h| h.trim() == "smiles")
        .ok_or(DatasetError::MissingSmilesColumn)?;
    let columns: Vec<(usize, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(c, h)| assay_index(h.trim()).map(|k| (c, k)))
        .collect();
    if columns.is_empty() {
        return Err(DatasetError::NoAssayColumns);
    }
    let mut data = Dataset {
        assays: columns.iter().map(|&(_, k)| k).collect(),
        ..Dataset::default()
    };
    let mut row = csv::StringRecord::new();
    loop {
        let more = rdr
            .read_record(&mut row)
            .map_err(|e| csv_error(&e, data.rows_in + 2))?;
        if !more {
            break;
        }
        let line = row.position().map_or(data.rows_in + 2, |p| p.line() as usize);
        if row.len() != header.len() {
            return Err(DatasetError::MalformedRow(line));
        }
        data.rows_in += 1;
        let mut labels: Labels = [None; N_ASSAYS];
        for &(c, k) in &columns {
            labels[k] = match row[c].trim() {
                "" => None,
                "0" | "0.0" => Some(false),
                "1" | "1.0" => Some(true),
                _ => return Err(DatasetError::MalformedRow(line)),
            };
        }
        let smiles = row[smiles_col].trim().to_string();
        let quarantine = |reason: String| Quarantined {
            line,
            smiles: smiles.clone(),
            reason,
        };
        if labels.iter().all(Option::is_none) {
            data.quarantine.push(quarantine("NoLabels".into()));
            continue;
        }
        let molecule = match parse(&smiles) {
            Ok(m) => m,
            Err(e) => {
                data.quarantine.push(quarantine(format!("{e:?}")));
                continue;
            }
        };
        if let Err(e) = layout2d(&molecule.desalt()) {
            data.quarantine.push(quarantine(format!("{e:?}")));
            continue;
        }
        data.records.push(DatasetRecord {
            line,
            smiles,
            labels,
            molecule,
        });
    }
    Ok(data)
}

fn csv_error(e: &csv::Error, fallback_line: usize) -> DatasetError {
    match e.kind() {
        csv::ErrorKind::Io(io) => DatasetError::Io(io.to_string()),
        _ => DatasetError::MalformedRow(e.position().map_or(fallback_line, |p| p.line() as usize)),
    }
}

/// SHA-256 over the records' SMILES and labels, as lowercase hex.
pub fn dataset_hash(records: &[DatasetRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(r.smiles.as_bytes());
        for l in &r.labels {
            h.update([match l {
                None => b'.',
                Some(false) => b'0',
                Some(true) => b'1',
            }]);
        }
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Writes records back out with the full panel header.
pub fn write_tox21_csv(records: &[(String, Labels)]) -> String {
    let mut out = String::from("smiles");
    for a in ASSAYS {
        out.push(',');
        out.push_str(a);
    }
    out.push('\n');
    for (smiles, labels) in records {
        out.push_str(smiles);
        for l in labels {
            out.push(',');
            match l {
                None => {}
                Some(false) => out.push('0'),
                Some(true) => out.push('1'),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        format!("smiles,{}\n", ASSAYS.join(","))
    }

    #[test]
    fn maps_fields_directly() {
        let text = format!("{}CCO,1,0,,,,,,,,,,\n", header());
        let d = read_tox21_csv(text.as_bytes()).unwrap();
        assert_eq!(d.records.len(), 1);
        let mut expected = [None; 12];
        expected[0] = Some(true);
        expected[1] = Some(false);
        assert_eq!(d.records[0].labels, expected);
        assert_eq!(d.records[0].line, 2);
        assert_eq!(d.assays, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn quarantines_bad_smiles() {
        let text = format!("{}C1CC,1,,,,,,,,,,,\nCC,,,,,,,,,,,,\nCC,0,,,,,,,,,,,\n", header());
        let d = read_tox21_csv(text.as_bytes()).unwrap();
        assert_eq!(d.rows_in, 3);
        assert_eq!(d.records.len(), 1);
        assert_eq!(d.quarantine.len(), 2);
        assert!(d.quarantine[0].reason.starts_with("UnclosedRing"));
        assert_eq!(d.quarantine[0].line, 2);
        assert_eq!(d.quarantine[1].reason, "NoLabels");
    }

    #[test]
    fn header_only_is_empty() {
        let d = read_tox21_csv(header().as_bytes()).unwrap();
        assert_eq!(d.rows_in, 0);
        assert!(d.records.is_empty() && d.quarantine.is_empty());
    }

    #[test]
    fn deepchem_layout_with_float_labels() {
        let text = "NR-AR,SR-p53,mol_id,smiles\n0.0,,TOX1,CCO\n,1.0,TOX2,c1ccccc1\n";
        let d = read_tox21_csv(text.as_bytes()).unwrap();
        assert_eq!(d.assays, vec![0, 11]);
        assert_eq!(d.records[0].labels[0], Some(false));
        assert_eq!(d.records[1].labels[11], Some(true));
    }

    #[test]
    fn header_and_row_errors() {
        assert_eq!(read_tox21_csv("mol,NR-AR\n".as_bytes()), Err(DatasetError::MissingSmilesColumn));
        assert_eq!(read_tox21_csv("smiles,foo\n".as_bytes()), Err(DatasetError::NoAssayColumns));
        assert_eq!(
            read_tox21_csv("smiles,NR-AR\nCC,1\nCC\n".as_bytes()),
            Err(DatasetError::MalformedRow(3))
        );
        assert_eq!(
            read_tox21_csv("smiles,NR-AR\nCC,yes\n".as_bytes()),
            Err(DatasetError::MalformedRow(2))
        );
    }

    #[test]
    fn written_csv_reads_back() {
        let mut labels = [None; 12];
        labels[3] = Some(true);
        labels[7] = Some(false);
        let text = write_tox21_csv(&[("CC(=O)O".into(), labels)]);
        let d = read_tox21_csv(text.as_bytes()).unwrap();
        assert_eq!(d.records[0].labels, labels);
        assert_eq!(d.records[0].smiles, "CC(=O)O");
    }
}

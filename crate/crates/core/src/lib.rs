//! Chemistry front end of the toxicity pipeline.
//!
//! [`smiles`] turns SMILES text into validated [`Molecule`] graphs,
//! [`fingerprint`] computes ECFP-style circular fingerprints over them and
//! [`depict`] lays molecules out in 2D and rasterizes them into the fixed-size
//! images consumed by the convolutional feature extractor.

pub mod depict;
pub mod element;
pub mod fingerprint;
pub mod molecule;
pub mod rings;
pub mod smiles;

pub use depict::{augment, layout2d, rasterize, DepictError, Layout2D, StructImage};
pub use fingerprint::{morgan_fingerprint, tanimoto, Fingerprint, FingerprintError};
pub use molecule::{Atom, Bond, BondOrder, Molecule};
pub use smiles::{parse, tokenize, SmilesError, Token, TokenKind};

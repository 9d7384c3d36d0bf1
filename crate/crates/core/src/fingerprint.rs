//! Morgan / ECFP circular fingerprints.
//!
//! Identifiers are 32-bit MurmurHash3 (x86_32, seed 0) digests over small
//! integer tuples, so fingerprints are bit-identical across processes and
//! platforms.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::molecule::Molecule;

pub const DEFAULT_RADIUS: usize = 2;
pub const DEFAULT_NBITS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("molecule has no atoms")]
    EmptyMolecule,
    #[error("fingerprint lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("fingerprint length {0} is not a power of two")]
    BadLength(usize),
    #[error("malformed hex fingerprint")]
    BadHex,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    bits: Vec<u64>,
    nbits: usize,
    radius: usize,
}

impl Fingerprint {
    pub fn new(nbits: usize, radius: usize) -> Result<Self, FingerprintError> {
        if nbits == 0 || !nbits.is_power_of_two() {
            return Err(FingerprintError::BadLength(nbits));
        }
        Ok(Fingerprint {
            bits: vec![0; nbits.div_ceil(64)],
            nbits,
            radius,
        })
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn set(&mut self, bit: usize) {
        let bit = bit % self.nbits;
        self.bits[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.bits[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nbits).filter(|&i| self.get(i))
    }

    /// Dense 0/1 feature vector.
    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.nbits)
            .map(|i| if self.get(i) { 1.0 } else { 0.0 })
            .collect()
    }

    /// Lowercase hex; byte `k` holds bits `8k..8k+8`, least significant first.
    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(self.nbits / 4);
        for k in 0..self.nbits.div_ceil(8) {
            let byte = (self.bits[k / 8] >> ((k % 8) * 8)) as u8;
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn from_hex(hex: &str, radius: usize) -> Result<Self, FingerprintError> {
        if !hex.len().is_multiple_of(2) {
            return Err(FingerprintError::BadHex);
        }
        let mut fp = Fingerprint::new(hex.len() * 4, radius)?;
        for k in 0..hex.len() / 2 {
            let byte = hex
                .get(2 * k..2 * k + 2)
                .and_then(|s| u8::from_str_radix(s, 16).ok())
                .ok_or(FingerprintError::BadHex)?;
            fp.bits[k / 8] |= u64::from(byte) << ((k % 8) * 8);
        }
        Ok(fp)
    }
}

/// MurmurHash3 x86_32 over little-endian 32-bit words.
pub fn murmur3_words(words: &[u32], seed: u32) -> u32 {
    const C1: u32 = 0xcc9e_2d51;
    const C2: u32 = 0x1b87_3593;
    let mut h = seed;
    for &w in words {
        let mut k = w.wrapping_mul(C1);
        k = k.rotate_left(15);
        k = k.wrapping_mul(C2);
        h ^= k;
        h = h.rotate_left(13);
        h = h.wrapping_mul(5).wrapping_add(0xe654_6b64);
    }
    h ^= (words.len() * 4) as u32;
    h ^= h >> 16;
    h = h.wrapping_mul(0x85eb_ca6b);
    h ^= h >> 13;
    h = h.wrapping_mul(0xc2b2_ae35);
    h ^= h >> 16;
    h
}

/// Initial ECFP identifier of an atom: element, degree, total hydrogens,
/// formal charge, ring membership and aromaticity.
pub fn atom_invariant(mol: &Molecule, atom: usize) -> u32 {
    let a = &mol.atoms[atom];
    murmur3_words(
        &[
            u32::from(a.element),
            mol.degree(atom) as u32,
            u32::from(mol.total_h(atom)),
            i32::from(a.formal_charge) as u32,
            u32::from(mol.ring_membership[atom]),
            u32::from(a.aromatic),
        ],
        0,
    )
}

/// Combines an atom's previous identifier with its sorted
/// `(bond order, neighbor identifier)` pairs into the next-radius identifier.
pub fn combine(iteration: usize, own: u32, neighbors: &mut [(u32, u32)]) -> u32 {
    neighbors.sort_unstable();
    let mut words = Vec::with_capacity(2 + 2 * neighbors.len());
    words.push(iteration as u32);
    words.push(own);
    for &(bond, id) in neighbors.iter() {
        words.push(bond);
        words.push(id);
    }
    murmur3_words(&words, 0)
}

/// Per-radius environment identifiers: `result[r][atom]`.
pub fn environment_ids(mol: &Molecule, radius: usize) -> Vec<Vec<u32>> {
    let n = mol.atom_count();
    let mut layers = Vec::with_capacity(radius + 1);
    layers.push((0..n).map(|a| atom_invariant(mol, a)).collect::<Vec<_>>());
    for r in 1..=radius {
        let prev = &layers[r - 1];
        let next = (0..n)
            .map(|a| {
                let mut nbrs: Vec<(u32, u32)> = mol
                    .neighbors(a)
                    .iter()
                    .map(|&(b, bi)| (mol.bonds[bi].order.code(), prev[b]))
                    .collect();
                combine(r, prev[a], &mut nbrs)
            })
            .collect();
        layers.push(next);
    }
    layers
}

/// Identifiers that survive duplicate removal, in discovery order.
///
/// An environment is identified by the set of bonds it covers. An atom's
/// environment at radius `r` is dropped when its bond set was already seen
/// (at a smaller radius, or at this radius from another atom with a smaller
/// identifier), so symmetric or saturated neighborhoods count once.
pub fn unique_environment_ids(mol: &Molecule, radius: usize) -> Vec<u32> {
    let n = mol.atom_count();
    let words = mol.bonds.len().div_ceil(64).max(1);
    let ids = environment_ids(mol, radius);
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    let mut out = Vec::new();
    let mut cover = vec![vec![0u64; words]; n];
    seen.insert(vec![0u64; words]);
    // Radius 0 environments cover no bonds; keep every distinct atom invariant.
    let mut r0: Vec<u32> = ids[0].clone();
    r0.sort_unstable();
    r0.dedup();
    out.extend(r0);
    for r in 1..=radius {
        let mut next = cover.clone();
        for (a, bits) in next.iter_mut().enumerate() {
            for &(b, bi) in mol.neighbors(a) {
                bits[bi / 64] |= 1 << (bi % 64);
                for (w, x) in bits.iter_mut().zip(&cover[b]) {
                    *w |= x;
                }
            }
        }
        let mut fresh: Vec<(Vec<u64>, u32)> = (0..n)
            .filter(|&a| next[a] != cover[a])
            .map(|a| (next[a].clone(), ids[r][a]))
            .collect();
        fresh.sort();
        for (bits, id) in fresh {
            if seen.insert(bits) {
                out.push(id);
            }
        }
        cover = next;
    }
    out
}

pub fn morgan_fingerprint(
    mol: &Molecule,
    radius: usize,
    nbits: usize,
) -> Result<Fingerprint, FingerprintError> {
    if mol.is_empty() {
        return Err(FingerprintError::EmptyMolecule);
    }
    let mut fp = Fingerprint::new(nbits, radius)?;
    for id in unique_environment_ids(mol, radius) {
        fp.set(id as usize % nbits);
    }
    Ok(fp)
}

pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    if a.nbits != b.nbits {
        return Err(FingerprintError::LengthMismatch(a.nbits, b.nbits));
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.bits.iter().zip(&b.bits) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    if either == 0 {
        return Ok(1.0);
    }
    Ok(f64::from(both) / f64::from(either))
}

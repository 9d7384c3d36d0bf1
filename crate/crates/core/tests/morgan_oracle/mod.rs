//! Environment identifiers recomputed by explicit tree unfolding.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use toxpipe_core::fingerprint::{atom_invariant, combine};
use toxpipe_core::molecule::Molecule;

/// Small molecules (at most six heavy atoms) used for the oracle comparison.
pub const SMALL: &[&str] = &[
    "C", "CC", "CCO", "CC=O", "C#N", "CC(C)C", "CC(C)(C)C", "C1CC1", "C1CCC1", "c1ccccc1",
    "c1ccoc1", "c1cc[nH]c1", "OC(=O)C", "NCC(=O)O", "ClC(Cl)Cl", "FC(F)(F)O", "CS(=O)C",
    "C=CC=C", "C1CC1C", "C1CCCC1", "C12CC1C2", "[NH4+]", "[O-]C=O", "OP(=O)(O)O", "N#CC#N",
    "C1=CC=CN1",
];

/// Environment identifier by explicit tree unfolding: the radius-r identifier
/// of `a` is built from the radius-(r-1) identifiers of `a` and each neighbor,
/// each recomputed from scratch.
pub fn unfolded_id(mol: &Molecule, a: usize, r: usize) -> u32 {
    if r == 0 {
        return atom_invariant(mol, a);
    }
    let mut nbrs: Vec<(u32, u32)> = mol
        .neighbors(a)
        .iter()
        .map(|&(b, bi)| (mol.bonds[bi].order.code(), unfolded_id(mol, b, r - 1)))
        .collect();
    combine(r, unfolded_id(mol, a, r - 1), &mut nbrs)
}

/// Bonds with at least one endpoint strictly closer than `r` to `a`,
/// i.e. every bond reachable within the radius-r neighborhood.
pub fn bond_set(mol: &Molecule, a: usize, r: usize) -> BTreeSet<usize> {
    let mut dist = vec![usize::MAX; mol.atom_count()];
    dist[a] = 0;
    let mut queue = VecDeque::from([a]);
    while let Some(x) = queue.pop_front() {
        for &(y, _) in mol.neighbors(x) {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    mol.bonds
        .iter()
        .enumerate()
        .filter(|(_, b)| dist[b.endpoints.0].min(dist[b.endpoints.1]) < r)
        .map(|(i, _)| i)
        .collect()
}

pub fn oracle_ids(mol: &Molecule, radius: usize) -> Vec<u32> {
    let n = mol.atom_count();
    let mut seen: Vec<BTreeSet<usize>> = vec![BTreeSet::new()];
    let mut r0: Vec<u32> = (0..n).map(|a| atom_invariant(mol, a)).collect();
    r0.sort_unstable();
    r0.dedup();
    let mut out = r0;
    for r in 1..=radius {
        let mut fresh: Vec<(Vec<usize>, u32)> = Vec::new();
        for a in 0..n {
            let bonds = bond_set(mol, a, r);
            if bonds == bond_set(mol, a, r - 1) {
                continue;
            }
            fresh.push((bonds.iter().copied().collect(), unfolded_id(mol, a, r)));
        }
        // Same key as the implementation: order by bond set, then identifier.
        fresh.sort_by(|x, y| {
            let key = |v: &Vec<usize>| {
                let mut words = vec![0u64; mol.bonds.len().div_ceil(64).max(1)];
                for &b in v {
                    words[b / 64] |= 1 << (b % 64);
                }
                words
            };
            key(&x.0).cmp(&key(&y.0)).then(x.1.cmp(&y.1))
        });
        for (bonds, id) in fresh {
            let set: BTreeSet<usize> = bonds.into_iter().collect();
            if !seen.contains(&set) {
                seen.push(set);
                out.push(id);
            }
        }
    }
    out
}

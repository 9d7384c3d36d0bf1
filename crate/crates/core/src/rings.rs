//! Ring perception: bridge detection for ring membership and a minimum
//! cycle basis for layout.

use std::collections::{HashSet, VecDeque};

use crate::molecule::{Bond, Molecule};

/// Flags bonds that lie on at least one cycle (i.e. are not bridges).
pub fn ring_bonds(n: usize, bonds: &[Bond], adjacency: &[Vec<(usize, usize)>]) -> Vec<bool> {
    // Iterative Tarjan bridge finding; recursion would overflow on long chains.
    let mut in_ring = vec![true; bonds.len()];
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // (atom, bond used to enter, next adjacency position)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(top) = stack.last_mut() {
            let (v, parent_bond) = (top.0, top.1);
            if top.2 < adjacency[v].len() {
                let (w, bi) = adjacency[v][top.2];
                top.2 += 1;
                if bi == parent_bond {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, bi, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(u, _, _)) = stack.last() {
                    low[u] = low[u].min(low[v]);
                    if low[v] > disc[u] {
                        in_ring[parent_bond] = false;
                    }
                }
            }
        }
    }
    in_ring
}

pub(crate) fn ring_atoms(n: usize, bonds: &[Bond], adjacency: &[Vec<(usize, usize)>]) -> Vec<bool> {
    let in_ring = ring_bonds(n, bonds, adjacency);
    let mut atoms = vec![false; n];
    for (bond, &ring) in bonds.iter().zip(&in_ring) {
        if ring {
            atoms[bond.endpoints.0] = true;
            atoms[bond.endpoints.1] = true;
        }
    }
    atoms
}

/// A minimum cycle basis. Each ring is an ordered cycle of atom indices;
/// rings are sorted by size, then by their smallest atom sequence.
pub fn smallest_rings(mol: &Molecule) -> Vec<Vec<usize>> {
    let n = mol.atom_count();
    let ring_bond = ring_bonds(n, &mol.bonds, &adjacency_of(mol));
    let ring_edges: Vec<usize> = (0..mol.bonds.len()).filter(|&b| ring_bond[b]).collect();
    if ring_edges.is_empty() {
        return Vec::new();
    }
    // Cyclomatic number of the ring subgraph.
    let mut ring_atom_count = 0;
    for a in 0..n {
        if mol.ring_membership[a] {
            ring_atom_count += 1;
        }
    }
    let components = ring_components(mol, &ring_bond);
    let target = ring_edges.len() + components - ring_atom_count;

    let edge_slot: Vec<Option<usize>> = {
        let mut slots = vec![None; mol.bonds.len()];
        for (slot, &b) in ring_edges.iter().enumerate() {
            slots[b] = Some(slot);
        }
        slots
    };

    // Horton candidates: for every ring atom v and ring bond (x, y), the
    // cycle formed by shortest paths v..x, v..y and the bond itself.
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    for v in 0..n {
        if !mol.ring_membership[v] {
            continue;
        }
        let parent = bfs_tree(mol, v, &ring_bond);
        for &bi in &ring_edges {
            let (x, y) = mol.bonds[bi].endpoints;
            if parent[x].is_none() || parent[y].is_none() {
                continue;
            }
            let px = path_to_root(&parent, x);
            let py = path_to_root(&parent, y);
            // Paths must meet only at v.
            let sx: HashSet<usize> = px.iter().copied().collect();
            if py[..py.len() - 1].iter().any(|a| sx.contains(a)) {
                continue;
            }
            // px: x .. v, py: y .. v. Cycle: v .. x, y .. (before v).
            let mut cycle: Vec<usize> = px.iter().rev().copied().collect();
            cycle.extend(py[..py.len() - 1].iter().copied());
            if cycle.len() < 3 {
                continue;
            }
            let key = canonical_cycle(&cycle);
            if seen.insert(key.clone()) {
                candidates.push(key);
            }
        }
    }
    candidates.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));

    let words = ring_edges.len().div_ceil(64);
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new(); // (pivot bit, vector)
    let mut rings = Vec::new();
    for cycle in candidates {
        if rings.len() == target {
            break;
        }
        let mut vec = vec![0u64; words];
        for i in 0..cycle.len() {
            let a = cycle[i];
            let b = cycle[(i + 1) % cycle.len()];
            let bi = mol
                .bond_between(a, b)
                .map(|bond| bond_index(mol, bond))
                .expect("cycle edges are bonds");
            let slot = edge_slot[bi].expect("cycle edges are ring bonds");
            vec[slot / 64] ^= 1 << (slot % 64);
        }
        for (pivot, row) in &basis {
            if vec[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (w, r) in vec.iter_mut().zip(row) {
                    *w ^= r;
                }
            }
        }
        if let Some(pivot) = first_bit(&vec) {
            basis.push((pivot, vec));
            rings.push(cycle);
        }
    }
    rings
}

fn adjacency_of(mol: &Molecule) -> Vec<Vec<(usize, usize)>> {
    (0..mol.atom_count())
        .map(|a| mol.neighbors(a).to_vec())
        .collect()
}

fn bond_index(mol: &Molecule, bond: &Bond) -> usize {
    let (a, b) = bond.endpoints;
    mol.neighbors(a)
        .iter()
        .find(|(n, _)| *n == b)
        .map(|&(_, bi)| bi)
        .expect("bond endpoints are adjacent")
}

fn ring_components(mol: &Molecule, ring_bond: &[bool]) -> usize {
    let n = mol.atom_count();
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n {
        if seen[start] || !mol.ring_membership[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(a) = stack.pop() {
            for &(b, bi) in mol.neighbors(a) {
                if ring_bond[bi] && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
    }
    count
}

fn bfs_tree(mol: &Molecule, root: usize, ring_bond: &[bool]) -> Vec<Option<usize>> {
    let mut parent = vec![None; mol.atom_count()];
    parent[root] = Some(root);
    let mut queue = VecDeque::from([root]);
    while let Some(a) = queue.pop_front() {
        for &(b, bi) in mol.neighbors(a) {
            if ring_bond[bi] && parent[b].is_none() {
                parent[b] = Some(a);
                queue.push_back(b);
            }
        }
    }
    parent
}

/// Path from `a` up to the BFS root, inclusive at both ends.
fn path_to_root(parent: &[Option<usize>], mut a: usize) -> Vec<usize> {
    let mut path = vec![a];
    while let Some(p) = parent[a] {
        if p == a {
            break;
        }
        path.push(p);
        a = p;
    }
    path
}

/// Rotates a cycle to start at its smallest atom and walks toward the
/// smaller neighbor, so equal cycles compare equal.
fn canonical_cycle(cycle: &[usize]) -> Vec<usize> {
    let n = cycle.len();
    let (start, _) = cycle
        .iter()
        .enumerate()
        .min_by_key(|&(_, a)| *a)
        .expect("non-empty cycle");
    let fwd = cycle[(start + 1) % n];
    let back = cycle[(start + n - 1) % n];
    if fwd <= back {
        (0..n).map(|i| cycle[(start + i) % n]).collect()
    } else {
        (0..n).map(|i| cycle[(start + n - i) % n]).collect()
    }
}

fn first_bit(vec: &[u64]) -> Option<usize> {
    vec.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

use std::fmt;

use crate::element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's bond-order sum. Aromatic bonds count one;
    /// the aromatic surplus is added per atom, see
    /// [`crate::smiles::implicit_hydrogen_count`].
    pub fn valence_contribution(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    /// Small stable code used by fingerprint hashing.
    pub fn code(self) -> u32 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BondOrder::Single => '-',
            BondOrder::Double => '=',
            BondOrder::Triple => '#',
            BondOrder::Aromatic => ':',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    /// Atomic number.
    pub element: u8,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogen count written inside brackets; `None` for organic-subset atoms.
    pub explicit_h: Option<u8>,
    pub isotope: Option<u16>,
    pub index: usize,
}

impl Atom {
    pub fn symbol(&self) -> &'static str {
        element::symbol(self.element)
    }

    pub fn is_bracket(&self) -> bool {
        self.explicit_h.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    /// Endpoints, stored with `endpoints.0 < endpoints.1`.
    pub endpoints: (usize, usize),
    pub order: BondOrder,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Self {
        Bond {
            endpoints: (a.min(b), a.max(b)),
            order,
        }
    }

    pub fn other(&self, atom: usize) -> usize {
        if self.endpoints.0 == atom {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }

    pub fn contains(&self, atom: usize) -> bool {
        self.endpoints.0 == atom || self.endpoints.1 == atom
    }
}

/// A molecular graph parsed from SMILES.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub ring_membership: Vec<bool>,
    pub implicit_h: Vec<u8>,
    /// Number of connected fragments in the graph.
    pub fragment_count: usize,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Molecule {
    /// Assembles a molecule, deriving adjacency, ring membership and
    /// fragment count from the bond list.
    pub(crate) fn assemble(atoms: Vec<Atom>, bonds: Vec<Bond>, implicit_h: Vec<u8>) -> Self {
        let adjacency = build_adjacency(atoms.len(), &bonds);
        let ring_membership = crate::rings::ring_atoms(atoms.len(), &bonds, &adjacency);
        let fragment_count = fragments_of(atoms.len(), &adjacency)
            .into_iter()
            .max()
            .map_or(0, |m| m + 1);
        Molecule {
            atoms,
            bonds,
            ring_membership,
            implicit_h,
            fragment_count,
            adjacency,
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms
            .iter()
            .filter(|a| a.element != element::HYDROGEN)
            .count()
    }

    /// `(neighbor, bond index)` pairs of an atom, in bond creation order.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|(n, _)| *n == b)
            .map(|&(_, bi)| &self.bonds[bi])
    }

    /// Implicit plus explicit hydrogens.
    pub fn total_h(&self, atom: usize) -> u8 {
        self.implicit_h[atom] + self.atoms[atom].explicit_h.unwrap_or(0)
    }

    /// Fragment label per atom, numbered in order of first atom.
    pub fn fragment_labels(&self) -> Vec<usize> {
        fragments_of(self.atoms.len(), &self.adjacency)
    }

    /// Keeps only the fragment with the most heavy atoms (first one on ties),
    /// preserving relative atom order.
    pub fn desalt(&self) -> Molecule {
        if self.fragment_count <= 1 {
            return self.clone();
        }
        let labels = self.fragment_labels();
        let mut heavy = vec![0usize; self.fragment_count];
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.element != element::HYDROGEN {
                heavy[labels[i]] += 1;
            }
        }
        let mut keep = 0;
        for (f, &count) in heavy.iter().enumerate() {
            if count > heavy[keep] {
                keep = f;
            }
        }
        let mut remap = vec![usize::MAX; self.atoms.len()];
        let mut atoms = Vec::new();
        let mut implicit_h = Vec::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            if labels[i] == keep {
                remap[i] = atoms.len();
                let mut a = atom.clone();
                a.index = atoms.len();
                atoms.push(a);
                implicit_h.push(self.implicit_h[i]);
            }
        }
        let bonds = self
            .bonds
            .iter()
            .filter(|b| labels[b.endpoints.0] == keep)
            .map(|b| Bond::new(remap[b.endpoints.0], remap[b.endpoints.1], b.order))
            .collect();
        Molecule::assemble(atoms, bonds, implicit_h)
    }
}

impl fmt::Display for Molecule {
    /// Adjacency listing: one atom per line, then one bond per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for atom in &self.atoms {
            let sym = if atom.aromatic {
                atom.symbol().to_ascii_lowercase()
            } else {
                atom.symbol().to_string()
            };
            writeln!(
                f,
                "atom {} {} {} {}",
                atom.index, sym, atom.formal_charge, self.implicit_h[atom.index]
            )?;
        }
        for bond in &self.bonds {
            let order = match bond.order {
                BondOrder::Single => "single",
                BondOrder::Double => "double",
                BondOrder::Triple => "triple",
                BondOrder::Aromatic => "aromatic",
            };
            writeln!(f, "bond {} {} {}", bond.endpoints.0, bond.endpoints.1, order)?;
        }
        Ok(())
    }
}

fn build_adjacency(n: usize, bonds: &[Bond]) -> Vec<Vec<(usize, usize)>> {
    let mut adjacency = vec![Vec::new(); n];
    for (bi, bond) in bonds.iter().enumerate() {
        let (a, b) = bond.endpoints;
        adjacency[a].push((b, bi));
        adjacency[b].push((a, bi));
    }
    adjacency
}

fn fragments_of(n: usize, adjacency: &[Vec<(usize, usize)>]) -> Vec<usize> {
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(a) = stack.pop() {
            for &(b, _) in &adjacency[a] {
                if label[b] == usize::MAX {
                    label[b] = next;
                    stack.push(b);
                }
            }
        }
        next += 1;
    }
    label
}

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toxpipe_core::molecule::Molecule;
use toxpipe_core::smiles::{parse, write_smiles};

/// Drug-like and Tox21-style structures covering fused, bridged, charged and
/// multi-fragment inputs.
pub const CORPUS: &[&str] = &[
    "CCO",
    "CC(=O)O",
    "CC(=O)Nc1ccc(O)cc1",
    "CC(=O)Oc1ccccc1C(=O)O",
    "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
    "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "c1ccc2ccccc2c1",
    "c1ccc2c(c1)ccc1ccccc12",
    "c1ccc2[nH]ccc2c1",
    "O=[N+]([O-])c1ccc(Cl)cc1",
    "Clc1ccc(cc1)C(c1ccc(Cl)cc1)C(Cl)(Cl)Cl",
    "CC12CCC3C(CCC4=CC(=O)CCC34C)C1CCC2O",
    "OC1=CC=C(C=C1)C(C)(C)C1=CC=C(O)C=C1",
    "CCCCCCCCCCCCCCCC(=O)O",
    "C1CCC2(CC1)CCCC2",
    "C1C2CC3CC1CC(C2)C3",
    "FC(F)(F)c1ccccc1",
    "CS(=O)(=O)N",
    "OP(=O)(O)OCC",
    "c1ccsc1",
    "c1ccoc1",
    "c1cc[nH]c1",
    "N#Cc1ccccc1",
    "C=CC=C",
    "CC(C)(C)c1cc(C(C)(C)C)c(O)c(C(C)(C)C)c1",
    "Brc1cc(Br)c(O)c(Br)c1",
    "OC(=O)CN(CC(=O)O)CC(=O)O",
    "CCOC(=O)C1=C(C)NC(C)=C(C1c1cccc(c1)[N+]([O-])=O)C(=O)OC",
    "c1ccc(cc1)-c1ccccc1",
    "Ic1ccccc1",
    "CC(C)NCC(O)COc1cccc2ccccc12",
    "O=C1c2ccccc2C(=O)c2ccccc12",
    "C[Si](C)(C)O",
    "[Na+].CC(=O)[O-]",
    "Cl.CN(C)CCCN1c2ccccc2CCc2ccccc12",
    "C1=CC=CC=C1",
    "C#C",
    "c1ccc2cc3ccccc3cc2c1",
    "OCC1OC(O)C(O)C(O)C1O",
    "CCN(CC)CC",
];

/// Random acyclic-plus-ring-unit SMILES with sane valences.
pub fn random_smiles(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = Gen {
        out: String::new(),
        label: 0,
    };
    let depth = rng.random_range(1..5);
    gen.unit(&mut rng, depth, 0);
    gen.out
}

struct Gen {
    out: String,
    label: u32,
}

impl Gen {
    fn next_label(&mut self) -> String {
        self.label += 1;
        if self.label < 10 {
            self.label.to_string()
        } else {
            format!("%{:02}", self.label)
        }
    }

    fn unit(&mut self, rng: &mut ChaCha8Rng, depth: u32, incoming: u8) {
        // Aromatic and saturated rings with one substitution point.
        if incoming <= 1 && rng.random_bool(0.25) {
            let l = self.next_label();
            let (head, tail) = *[
                ("c", "ccc{}cc"),
                ("C", "CCC{}CC"),
                ("c", "cnc{}cc"),
                ("C", "COC{}C"),
            ]
            .choose(rng)
            .unwrap();
            self.out.push_str(head);
            self.out.push_str(&l);
            let (pre, post) = tail.split_once("{}").unwrap();
            self.out.push_str(pre);
            if depth > 0 && rng.random_bool(0.6) {
                self.out.push('(');
                self.unit(rng, depth - 1, 1);
                self.out.push(')');
            }
            self.out.push_str(post);
            self.out.push_str(&l);
            return;
        }
        let choices: &[(&str, u8)] = &[
            ("C", 4),
            ("C", 4),
            ("C", 4),
            ("N", 3),
            ("O", 2),
            ("S", 2),
            ("Cl", 1),
            ("F", 1),
            ("Br", 1),
        ];
        let viable: Vec<&(&str, u8)> = choices.iter().filter(|(_, v)| *v >= incoming.max(1)).collect();
        let (sym, valence) = **viable.choose(rng).unwrap();
        self.out.push_str(sym);
        let mut free = valence - incoming;
        if depth == 0 || free == 0 {
            return;
        }
        let kids = rng.random_range(0..=free.min(3));
        for k in 0..kids {
            let order = if free >= 2 && rng.random_bool(0.15) { 2 } else { 1 };
            let last = k + 1 == kids;
            if !last {
                self.out.push('(');
            }
            if order == 2 {
                self.out.push('=');
            }
            self.unit(rng, depth - 1, order);
            free -= order;
            if !last {
                self.out.push(')');
            }
            if free == 0 {
                break;
            }
        }
    }
}

/// Re-writes `mol` from a random root with a random neighbor ranking.
pub fn random_rewrite(mol: &Molecule, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mol.atom_count();
    let root = rng.random_range(0..n);
    let mut rank: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    rank.shuffle(&mut rng);
    write_smiles(mol, root, &rank)
}

pub fn desalted(smiles: &str) -> Molecule {
    parse(smiles).unwrap().desalt()
}

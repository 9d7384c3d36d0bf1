mod common;
mod morgan_oracle;

use std::collections::BTreeSet;

use morgan_oracle::{oracle_ids, unfolded_id, SMALL};
use proptest::prelude::*;
use toxpipe_core::fingerprint::{environment_ids, morgan_fingerprint, unique_environment_ids};
use toxpipe_core::smiles::parse;

#[test]
fn environments_match_unfolding_oracle() {
    for s in SMALL {
        let mol = parse(s).unwrap();
        assert!(mol.heavy_atom_count() <= 6, "{s}");
        for radius in 0..=3 {
            let layers = environment_ids(&mol, radius);
            for (r, layer) in layers.iter().enumerate() {
                for (a, &id) in layer.iter().enumerate() {
                    assert_eq!(id, unfolded_id(&mol, a, r), "{s} atom {a} r {r}");
                }
            }
            assert_eq!(unique_environment_ids(&mol, radius), oracle_ids(&mol, radius), "{s} r {radius}");
        }
    }
}

#[test]
fn distinct_environments_stay_distinct() {
    // Two-atom ethane at radius 1: the shared C-C environment appears once.
    let mol = parse("CC").unwrap();
    assert_eq!(unique_environment_ids(&mol, 1).len(), 2);
    // Propane: two atom types at r=0; at r=1 each end carbon covers a
    // different bond and the middle carbon covers both.
    let mol = parse("CCC").unwrap();
    assert_eq!(unique_environment_ids(&mol, 1).len(), 5);
}

#[test]
fn corpus_rewrites_give_identical_bits() {
    let mut molecules: Vec<String> = common::CORPUS.iter().map(|s| s.to_string()).collect();
    molecules.extend((0..10u64).map(common::random_smiles));
    assert!(molecules.len() >= 50);
    for s in &molecules {
        let mol = common::desalted(s);
        let reference = morgan_fingerprint(&mol, 2, 2048).unwrap();
        for k in 0..5 {
            let rewritten = common::random_rewrite(&mol, k * 7919 + 1);
            let other = morgan_fingerprint(&parse(&rewritten).unwrap(), 2, 2048).unwrap();
            assert_eq!(reference, other, "{s} -> {rewritten}");
        }
    }
}

proptest! {
    #[test]
    fn random_rewrites_give_identical_bits(seed in any::<u64>(), order in any::<u64>()) {
        let mol = parse(&common::random_smiles(seed)).unwrap();
        let rewritten = common::random_rewrite(&mol, order);
        let a = morgan_fingerprint(&mol, 2, 2048).unwrap();
        let b = morgan_fingerprint(&parse(&rewritten).unwrap(), 2, 2048).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn environment_sets_grow_with_radius(seed in any::<u64>()) {
        let mol = parse(&common::random_smiles(seed)).unwrap();
        for r in 0..3 {
            let small = unique_environment_ids(&mol, r);
            let large = unique_environment_ids(&mol, r + 1);
            prop_assert!(large.starts_with(&small));
            let all_small: BTreeSet<u32> = environment_ids(&mol, r).concat().into_iter().collect();
            let all_large: BTreeSet<u32> = environment_ids(&mol, r + 1).concat().into_iter().collect();
            prop_assert!(all_small.is_subset(&all_large));
        }
    }

    #[test]
    fn non_empty_molecules_set_bits(seed in any::<u64>()) {
        let mol = parse(&common::random_smiles(seed)).unwrap();
        let fp = morgan_fingerprint(&mol, 2, 1024).unwrap();
        prop_assert!(fp.count_ones() >= 1);
    }
}

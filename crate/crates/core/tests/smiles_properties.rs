mod common;

use proptest::prelude::*;
use toxpipe_core::element;
use toxpipe_core::smiles::{parse, tokenize, TokenKind};

#[test]
fn corpus_parses() {
    for s in common::CORPUS {
        let mol = parse(s).unwrap_or_else(|e| panic!("{s}: {e}"));
        assert!(!mol.is_empty());
    }
}

#[test]
fn ring_digits_pair_up() {
    for s in common::CORPUS.iter().copied().chain((0..200).map(|i| Box::leak(common::random_smiles(i).into_boxed_str()) as &str)) {
        let tokens = tokenize(s).unwrap();
        let mut counts = std::collections::HashMap::new();
        for t in tokens.iter().filter(|t| t.kind == TokenKind::RingClosureDigit) {
            *counts.entry(t.text).or_insert(0usize) += 1;
        }
        assert!(counts.values().all(|c| c % 2 == 0), "{s}");
    }
}

fn valence_sound(s: &str) {
    let mol = parse(s).unwrap();
    for (i, atom) in mol.atoms.iter().enumerate() {
        let sum: u32 = mol
            .neighbors(i)
            .iter()
            .map(|&(_, bi)| u32::from(mol.bonds[bi].order.valence_contribution()))
            .sum();
        let total = sum + u32::from(mol.total_h(i));
        if let Some(&max) = element::allowed_valences(atom.element).last() {
            let limit = u32::from(max) + u32::from(atom.formal_charge.unsigned_abs());
            assert!(total <= limit, "{s}: atom {i} total {total} > {limit}");
        }
    }
}

#[test]
fn corpus_valence_soundness() {
    for s in common::CORPUS {
        valence_sound(s);
    }
}

proptest! {
    #[test]
    fn token_payloads_reproduce_input(seed in any::<u64>()) {
        let s = common::random_smiles(seed);
        let tokens = tokenize(&s).unwrap();
        let joined: String = tokens.iter().map(|t| t.text).collect();
        prop_assert_eq!(&joined, &s);
        for w in tokens.windows(2) {
            prop_assert!(w[0].position < w[1].position);
        }
    }

    #[test]
    fn random_smiles_parse_deterministically(seed in any::<u64>()) {
        let s = common::random_smiles(seed);
        let a = parse(&s).unwrap();
        let b = parse(&s).unwrap();
        prop_assert_eq!(a, b);
        valence_sound(&s);
    }

    #[test]
    fn arbitrary_text_never_panics(s in "[A-Za-z0-9()\\[\\]=#@+\\-%./\\\\:]{0,40}") {
        let _ = parse(&s);
    }

    #[test]
    fn rewrites_preserve_the_graph(seed in any::<u64>(), order in any::<u64>()) {
        let mol = parse(&common::random_smiles(seed)).unwrap();
        let rewritten = common::random_rewrite(&mol, order);
        let again = parse(&rewritten).unwrap();
        prop_assert_eq!(again.atom_count(), mol.atom_count());
        prop_assert_eq!(again.bonds.len(), mol.bonds.len());
        let mut h1 = mol.implicit_h.clone();
        let mut h2 = again.implicit_h.clone();
        h1.sort();
        h2.sort();
        prop_assert_eq!(h1, h2);
    }
}

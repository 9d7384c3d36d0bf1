mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use toxpipe::assays::{Labels, ASSAYS, N_ASSAYS};
use toxpipe::bundle::ModelBundle;
use toxpipe::dataset::read_tox21_csv;
use toxpipe::metrics::{accuracy, roc_auc};
use toxpipe::pipeline::{predict_report, train, PredictOptions};
use toxpipe::split::{split, split_sizes};
use toxpipe::synthetic::{generate, SyntheticParams};

fn labels_strategy(prevalence: std::ops::Range<f64>, sizes: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Labels>> {
    // Per-assay prevalence, then records drawn against it.
    (prop::collection::vec(prevalence, N_ASSAYS), sizes, any::<u64>()).prop_map(|(prev, n, seed)| {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut l: Labels = [None; N_ASSAYS];
                for (k, p) in prev.iter().enumerate() {
                    if rng.random_bool(0.85) {
                        l[k] = Some(rng.random_bool(*p));
                    }
                }
                l
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn split_is_disjoint_exhaustive_and_deterministic(labels in labels_strategy(0.0..0.5, 0..400), seed in any::<u64>()) {
        let fractions = [0.8, 0.1, 0.1];
        let s = split(&labels, seed, fractions).unwrap();
        let mut all: Vec<usize> = s.parts().concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        let sizes = split_sizes(labels.len(), fractions).unwrap();
        prop_assert_eq!([s.train.len(), s.val.len(), s.test.len()], sizes);
        prop_assert_eq!(&s, &split(&labels, seed, fractions).unwrap());
    }

    /// Dense labels on tiny datasets cannot be balanced for all assays at
    /// once, so this runs at Tox21-like prevalences (about 2% to 16%).
    #[test]
    fn split_keeps_actives_proportional(labels in labels_strategy(0.02..0.16, 100..600), seed in any::<u64>()) {
        let fractions = [0.8, 0.1, 0.1];
        let s = split(&labels, seed, fractions).unwrap();
        for k in 0..N_ASSAYS {
            let total = labels.iter().filter(|l| l[k] == Some(true)).count() as f64;
            for (part, f) in s.parts().iter().zip(fractions) {
                let got = part.iter().filter(|&&i| labels[i][k] == Some(true)).count() as f64;
                let want = total * f;
                // 20% of the proportional share, plus one for integer rounding.
                prop_assert!((got - want).abs() <= 0.2 * want + 1.0, "assay {k}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn ingestion_conserves_rows(rows in prop::collection::vec((0usize..4, prop::collection::vec(0u8..3, N_ASSAYS)), 0..40)) {
        let smiles = ["CCO", "c1ccccc1Cl", "C1CC", "C(C"];
        let mut text = format!("smiles,{}\n", ASSAYS.join(","));
        for (s, cells) in &rows {
            text.push_str(smiles[*s]);
            for c in cells {
                text.push(',');
                text.push_str(["", "0", "1"][usize::from(*c)]);
            }
            text.push('\n');
        }
        let d = read_tox21_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(d.rows_in, rows.len());
        prop_assert_eq!(d.rows_in, d.records.len() + d.quarantine.len());
        let good = rows.iter().filter(|(s, c)| *s < 2 && c.iter().any(|&v| v > 0)).count();
        prop_assert_eq!(d.records.len(), good);
    }

    #[test]
    fn auc_equals_pairwise_count(
        data in prop::collection::vec((0u8..6, any::<bool>()), 2..60),
    ) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 5.0).collect();
        let truth: Vec<bool> = data.iter().map(|(_, t)| *t).collect();
        prop_assert_eq!(roc_auc(&scores, &truth), pairwise_auc(&scores, &truth));
    }
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting
/// one half.
fn pairwise_auc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for (i, &ti) in truth.iter().enumerate() {
        for (j, &tj) in truth.iter().enumerate() {
            if ti && !tj {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

#[test]
fn auc_hand_fixture() {
    // Positives at 0.9, 0.4, 0.4; negatives at 0.4, 0.3, 0.1. Of 9 pairs, 7
    // are ordered correctly and two tie at 0.4.
    let scores = [0.9, 0.4, 0.4, 0.4, 0.3, 0.1];
    let truth = [true, true, true, false, false, false];
    assert_eq!(pairwise_auc(&scores, &truth), Some(8.0 / 9.0));
    assert_eq!(roc_auc(&scores, &truth), Some(8.0 / 9.0));
    assert_eq!(roc_auc(&[0.5; 6], &truth), Some(0.5));
    assert_eq!(roc_auc(&scores, &[true; 6]), None);
    assert_eq!(accuracy(&truth, &truth), 1.0);
}

fn tiny_bundle() -> &'static ModelBundle {
    static BUNDLE: OnceLock<ModelBundle> = OnceLock::new();
    BUNDLE.get_or_init(|| {
        let data = common::synthetic_dataset(60, 4);
        train(&data.records, &common::tiny_config(), |_| {}).unwrap().0
    })
}

#[test]
fn reports_are_valid_for_generated_molecules() {
    let bundle = tiny_bundle();
    let opts = PredictOptions::default();
    let mut molecules: Vec<String> = generate(40, 77, &SyntheticParams::default()).into_iter().map(|(s, _)| s).collect();
    molecules.extend(["C", "[Na+].[Cl-]", "CC(=O)Oc1ccccc1C(=O)O", "OCC1OC(O)C(O)C(O)C1O"].map(String::from));
    for s in &molecules {
        let r = predict_report(bundle, s, &opts).unwrap();
        assert!(r.is_valid(), "{s}: {r:?}");
        assert_eq!(r.assays.len(), 12);
    }
}

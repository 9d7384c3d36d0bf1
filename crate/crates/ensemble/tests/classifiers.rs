use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use toxpipe_ensemble::gbm::fit_gbm_with_history;
use toxpipe_ensemble::{
    fit_gbm, fit_linear_svm, fit_random_forest, EnsembleError, FeatureSubsample, ForestParams, GbmParams, Node,
    SvmParams,
};

fn rows(x: &[Vec<f64>]) -> Vec<&[f64]> {
    x.iter().map(Vec::as_slice).collect()
}

/// Two Gaussian blobs around (-2,-2) and (2,2), with every point at least
/// one unit from the separating line x + y = 0 (margin 2).
fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.7).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    while x.len() < n {
        let label = x.len() % 2 == 0;
        let c = if label { 2.0 } else { -2.0 };
        let p = vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)];
        let side = (p[0] + p[1]) / 2f64.sqrt();
        if (label && side >= 1.0) || (!label && side <= -1.0) {
            x.push(p);
            y.push(label);
        }
    }
    (x, y)
}

fn xor(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.2).unwrap();
    (0..n)
        .map(|i| {
            let (a, b) = (i % 2 == 0, (i / 2) % 2 == 0);
            let p = vec![
                f64::from(u8::from(a)) + noise.sample(&mut rng),
                f64::from(u8::from(b)) + noise.sample(&mut rng),
            ];
            (p, a != b)
        })
        .unzip()
}

fn accuracy(pred: impl Fn(&[f64]) -> bool, x: &[Vec<f64>], y: &[bool]) -> f64 {
    x.iter().zip(y).filter(|(r, &t)| pred(r) == t).count() as f64 / x.len() as f64
}

#[test]
fn svm_separates_blobs() {
    for seed in 0..5 {
        let (x, y) = blobs(200, seed);
        let svm = fit_linear_svm(&rows(&x), &y, &SvmParams::default()).unwrap();
        assert_eq!(accuracy(|r| svm.decision(r) > 0.0, &x, &y), 1.0);
        assert_eq!(accuracy(|r| svm.predict_proba(r) > 0.5, &x, &y), 1.0);
    }
}

#[test]
fn svm_cannot_fit_xor() {
    for seed in 0..5 {
        let (x, y) = xor(200, seed);
        let svm = fit_linear_svm(&rows(&x), &y, &SvmParams::default()).unwrap();
        assert!(accuracy(|r| svm.decision(r) > 0.0, &x, &y) <= 0.75);
        assert!(accuracy(|r| svm.predict_proba(r) > 0.5, &x, &y) <= 0.75);
    }
}

#[test]
fn single_class_labels_are_rejected() {
    let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
    let r = rows(&x);
    let y = [false; 4];
    let err = EnsembleError::SingleClassLabel {
        positives: 0,
        negatives: 4,
    };
    assert_eq!(fit_linear_svm(&r, &y, &SvmParams::default()).unwrap_err(), err);
    assert_eq!(fit_random_forest(&r, &y, &ForestParams::default()).unwrap_err(), err);
    assert_eq!(fit_gbm(&r, &y, &GbmParams::default()).unwrap_err(), err);
}

#[test]
fn a_single_positive_is_enough_to_fit() {
    let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
    let r = rows(&x);
    let y = [false, false, false, true];
    let svm = fit_linear_svm(&r, &y, &SvmParams::default()).unwrap();
    assert!(svm.decision(&x[3]) > svm.decision(&x[0]));
    let params = ForestParams {
        n_trees: 1,
        bootstrap: false,
        max_features: FeatureSubsample::All,
        ..ForestParams::default()
    };
    assert_eq!(fit_random_forest(&r, &y, &params).unwrap().predict_proba(&x[3]), 1.0);
    let gbm = fit_gbm(&r, &y, &GbmParams::default()).unwrap();
    assert!(gbm.predict_proba(&x[3]) > 0.5 && gbm.predict_proba(&x[0]) < 0.5);
}

#[test]
fn gini_root_split_matches_hand_enumeration() {
    let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
    let y = [false, false, true, true];
    // Weighted Gini of each candidate threshold, by hand:
    //   0.5 -> {n} | {n,p,p}: 1·0 + 3·(1 - 1/9 - 4/9) = 4/3
    //   1.5 -> {n,n} | {p,p}: 0
    //   2.5 -> {n,n,p} | {p}: 4/3
    let params = ForestParams {
        n_trees: 1,
        max_depth: Some(1),
        max_features: FeatureSubsample::All,
        bootstrap: false,
        ..ForestParams::default()
    };
    let forest = fit_random_forest(&rows(&x), &y, &params).unwrap();
    match forest.trees[0].nodes[0] {
        Node::Split { feature, threshold, .. } => {
            assert_eq!(feature, 0);
            assert!(threshold > 1.0 && threshold < 2.0);
        }
        ref other => panic!("expected a split, got {other:?}"),
    }
}

/// Weighted Gini impurity of the children for every threshold between
/// consecutive distinct values; returns the smallest.
fn best_gini_oracle(x: &[f64], y: &[bool]) -> f64 {
    let mut values: Vec<f64> = x.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let gini = |side: &[bool]| -> f64 {
        if side.is_empty() {
            return 0.0;
        }
        let p = side.iter().filter(|&&v| v).count() as f64 / side.len() as f64;
        side.len() as f64 * (1.0 - p * p - (1.0 - p) * (1.0 - p))
    };
    let mut best = f64::INFINITY;
    for w in values.windows(2) {
        let t = (w[0] + w[1]) / 2.0;
        let left: Vec<bool> = x.iter().zip(y).filter(|(v, _)| **v <= t).map(|(_, &l)| l).collect();
        let right: Vec<bool> = x.iter().zip(y).filter(|(v, _)| **v > t).map(|(_, &l)| l).collect();
        best = best.min(gini(&left) + gini(&right));
    }
    best
}

#[test]
fn depth_one_split_is_gini_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.random_range(4..30);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..12u8))).collect();
        let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        y[0] = true;
        y[1] = true;
        y[2] = false;
        y[3] = false;
        let data: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let params = ForestParams {
            n_trees: 1,
            max_depth: Some(1),
            max_features: FeatureSubsample::All,
            bootstrap: false,
            max_bins: usize::MAX,
            seed: 0,
        };
        let forest = fit_random_forest(&rows(&data), &y, &params).unwrap();
        let tree = &forest.trees[0];
        let Node::Split { threshold, .. } = tree.nodes[0] else {
            // Only a single distinct value leaves nothing to split on.
            assert!(x.iter().all(|&a| a == x[0]));
            continue;
        };
        let left: Vec<bool> = x.iter().zip(&y).filter(|(v, _)| **v <= threshold).map(|(_, &l)| l).collect();
        let right: Vec<bool> = x.iter().zip(&y).filter(|(v, _)| **v > threshold).map(|(_, &l)| l).collect();
        let g = |s: &[bool]| {
            let p = s.iter().filter(|&&v| v).count() as f64 / s.len() as f64;
            s.len() as f64 * (1.0 - p * p - (1.0 - p) * (1.0 - p))
        };
        let chosen = g(&left) + g(&right);
        assert!((chosen - best_gini_oracle(&x, &y)).abs() < 1e-9);
    }
}

fn memorizing_params(max_features: FeatureSubsample) -> ForestParams {
    ForestParams {
        n_trees: 1,
        max_depth: None,
        max_features,
        bootstrap: false,
        max_bins: usize::MAX,
        seed: 5,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unpruned_single_tree_memorizes(
        points in prop::collection::vec((0u8..6, 0u8..6, 0u8..4), 4..60),
        rule in any::<u64>(),
        sqrt in any::<bool>(),
    ) {
        // Labels are a function of the features, so the data is consistent.
        let x: Vec<Vec<f64>> = points.iter().map(|&(a, b, c)| vec![f64::from(a), f64::from(b), f64::from(c)]).collect();
        let y: Vec<bool> = points.iter().map(|&(a, b, c)| (rule >> ((a * 16 + b * 4 + c) % 64)) & 1 == 1).collect();
        let pos = y.iter().filter(|&&v| v).count();
        prop_assume!(pos >= 2 && y.len() - pos >= 2);
        let features = if sqrt { FeatureSubsample::Sqrt } else { FeatureSubsample::All };
        let forest = fit_random_forest(&rows(&x), &y, &memorizing_params(features)).unwrap();
        prop_assert!(forest.trees[0].is_valid(3));
        for (r, &t) in x.iter().zip(&y) {
            let p = forest.predict_proba(r);
            prop_assert_eq!(p, if t { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn forest_probabilities_are_vote_fractions(seed in 0u64..1000, n_trees in 1usize..12) {
        let (x, y) = xor(60, seed);
        let params = ForestParams { n_trees, max_depth: Some(3), seed, ..ForestParams::default() };
        let forest = fit_random_forest(&rows(&x), &y, &params).unwrap();
        for tree in &forest.trees {
            prop_assert!(tree.is_valid(2));
            prop_assert!(tree.depth() <= 3);
        }
        for r in &x {
            let p = forest.predict_proba(r);
            prop_assert!((0.0..=1.0).contains(&p));
            let k = p * n_trees as f64;
            prop_assert!((k - k.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn gbm_training_loss_never_increases(
        seed in 0u64..10_000,
        depth in 0usize..5,
        lr in 0.0f64..1.5,
        lambda in 0.0f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(6..80);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
        let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        y[..2].fill(true);
        y[2..4].fill(false);
        let params = GbmParams { n_rounds: 25, max_depth: depth, learning_rate: lr, lambda, ..GbmParams::default() };
        let (model, history) = fit_gbm_with_history(&rows(&x), &y, &params).unwrap();
        prop_assert_eq!(history.len(), 26);
        for w in history.windows(2) {
            prop_assert!(w[1] <= w[0], "{:?}", history);
        }
        for t in &model.trees {
            prop_assert!(t.is_valid(2) && t.depth() <= depth);
        }
        for r in &x {
            let p = model.predict_proba(r);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn svm_probabilities_stay_open(seed in 0u64..1000, probe in prop::array::uniform2(-1e6f64..1e6)) {
        let (x, y) = blobs(40, seed);
        let svm = fit_linear_svm(&rows(&x), &y, &SvmParams { seed, ..SvmParams::default() }).unwrap();
        let p = svm.predict_proba(&probe);
        prop_assert!(p > 0.0 && p < 1.0);
    }
}

#[test]
fn memorized_point_has_probability_one() {
    let (x, y) = xor(40, 3);
    let forest = fit_random_forest(&rows(&x), &y, &memorizing_params(FeatureSubsample::All)).unwrap();
    let i = y.iter().position(|&v| v).unwrap();
    assert_eq!(forest.predict_proba(&x[i]), 1.0);
}

#[test]
fn gbm_single_leaf_weight_by_hand() {
    let x: Vec<Vec<f64>> = (0..6).map(|i| vec![f64::from(i)]).collect();
    let y = [true, true, true, true, false, false];
    let params = GbmParams {
        n_rounds: 1,
        max_depth: 0,
        learning_rate: 0.3,
        lambda: 1.0,
        base_score: Some(0.0),
        ..GbmParams::default()
    };
    let model = fit_gbm(&rows(&x), &y, &params).unwrap();
    // At score 0 every p is 1/2: g = p - y gives G = 6·0.5 - 4 = -1,
    // h = p(1-p) gives H = 6·0.25 = 1.5, so w = -G/(H+λ) = 0.4.
    let Node::Leaf { value } = model.trees[0].nodes[0] else { panic!("depth 0 must be a leaf") };
    assert_eq!(model.trees[0].nodes.len(), 1);
    assert!((value - 0.4).abs() <= 1e-12);
    assert_eq!(model.shrinkage, vec![0.3]);
    assert!((model.score(&[7.0]) - 0.12).abs() <= 1e-12);

    // Balanced labels: G = 0, so the leaf is exactly zero.
    let balanced = fit_gbm(&rows(&x), &[true, false, true, false, true, false], &params).unwrap();
    assert_eq!(balanced.trees[0].nodes, vec![Node::Leaf { value: 0.0 }]);
}

#[test]
fn zero_learning_rate_keeps_the_base_score() {
    let (x, y) = xor(60, 1);
    let params = GbmParams {
        n_rounds: 20,
        learning_rate: 0.0,
        base_score: Some(0.4),
        ..GbmParams::default()
    };
    let model = fit_gbm(&rows(&x), &y, &params).unwrap();
    let expected = 1.0 / (1.0 + (-0.4f64).exp());
    for r in x.iter().chain([vec![100.0, -100.0]].iter()) {
        assert!((model.predict_proba(r) - expected).abs() <= 1e-15);
    }
}

#[test]
fn gbm_learns_xor() {
    let (x, y) = xor(200, 2);
    let params = GbmParams {
        n_rounds: 50,
        max_depth: 2,
        learning_rate: 0.3,
        ..GbmParams::default()
    };
    let (model, history) = fit_gbm_with_history(&rows(&x), &y, &params).unwrap();
    assert!(history.last().unwrap() < &(0.5 * history[0]));
    assert!(accuracy(|r| model.predict_proba(r) > 0.5, &x, &y) > 0.95);
}

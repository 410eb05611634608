use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shelfwatch_core::classify::{
    kfold_cv, kfold_partition, linear_train, CvConfig, KnnClassifier, LabeledSample, LinearModel,
};
use shelfwatch_core::{FeatureVector, PoseLabel, FEATURE_DIM};
use shelfwatch_oracles as oracle;

fn random_samples(n: usize, seed: u64, active_dims: usize) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            // A coarse grid makes exact distance ties common.
            let prefix: Vec<f64> = (0..active_dims)
                .map(|_| f64::from(rng.random_range(-3i32..=3)))
                .collect();
            LabeledSample {
                features: FeatureVector::embed(&prefix, format!("s{i}")).unwrap(),
                label: PoseLabel::ALL[rng.random_range(0..4)],
            }
        })
        .collect()
}

#[test]
fn knn_agrees_with_exhaustive_sort() {
    for (seed, n) in [(1u64, 200usize), (2, 57), (3, 120)] {
        let data = random_samples(n, seed, 3);
        let train: Vec<(Vec<f64>, usize)> = data
            .iter()
            .map(|s| (s.features.values().to_vec(), s.label.index()))
            .collect();
        let queries = random_samples(60, seed + 1000, 3);
        for k in [1, 3, 5, 11] {
            let model = KnnClassifier::new(k, data.clone()).unwrap();
            for q in &queries {
                let want = oracle::knn(&train, 4, k, q.features.values());
                assert_eq!(model.predict(q.features.values()).index(), want, "seed {seed} k {k}");
            }
        }
    }
}

#[test]
fn linear_argmax_has_maximal_score() {
    let data = random_samples(80, 5, 6);
    let model = linear_train(&data, 4, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let x: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = model.predict(&x).index();
        for c in 0..4 {
            let direct: f64 = model.weights[c].iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + model.biases[c];
            let mine: f64 = model.weights[got].iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + model.biases[got];
            assert!(mine >= direct);
        }
    }
    let zero = LinearModel::<f64>::zeros(FEATURE_DIM);
    assert_eq!(zero.predict(&[1.0; FEATURE_DIM]), PoseLabel::FacingForward);
}

#[test]
fn cv_report_is_consistent_and_deterministic() {
    let data = random_samples(97, 8, 4);
    let config = CvConfig {
        fold_count: 7,
        seed: 3,
        ..CvConfig::default()
    };
    let report = kfold_cv(&data, &config).unwrap();
    assert_eq!(report, kfold_cv(&data, &config).unwrap());
    assert_eq!(report.fold_sizes.iter().sum::<usize>(), 97);
    for result in report.knn_sweep.iter().chain([&report.linear]) {
        let weighted: f64 = result
            .fold_accuracies
            .iter()
            .zip(&report.fold_sizes)
            .map(|(a, &n)| a * n as f64)
            .sum::<f64>()
            / 97.0;
        assert!((weighted - result.mean_accuracy).abs() < 1e-12);
        assert!(result.fold_accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
    }
    let best = report.knn_sweep.iter().map(|r| r.mean_accuracy).fold(0.0, f64::max);
    assert_eq!(report.knn.mean_accuracy, best);
}

proptest! {
    #[test]
    fn partition_laws(n in 2usize..400, folds in 2usize..15, seed in any::<u64>()) {
        prop_assume!(n >= folds);
        let parts = kfold_partition(n, folds, seed).unwrap();
        prop_assert_eq!(parts.len(), folds);
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        let max = *sizes.iter().max().unwrap();
        let min = *sizes.iter().min().unwrap();
        prop_assert!(max - min <= 1);
        let union: HashSet<usize> = parts.iter().flatten().copied().collect();
        prop_assert_eq!(union.len(), n);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert_eq!(parts, kfold_partition(n, folds, seed).unwrap());
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::linear::linear_train;
use super::{ClassifyError, KnnClassifier, LabeledSample, ModelKind, TrainedModel};

/// Neighbour counts evaluated by the cross-validation sweep.
pub const DEFAULT_KNN_SWEEP: [usize; 4] = [1, 3, 5, 11];
/// Neighbour count used when no sweep result is available.
pub const DEFAULT_KNN_K: usize = 5;
pub const DEFAULT_EPOCHS: usize = 10;
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub fold_count: usize,
    pub seed: u64,
    pub knn_sweep: Vec<usize>,
    pub epochs: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            fold_count: DEFAULT_FOLDS,
            seed: 0,
            knn_sweep: DEFAULT_KNN_SWEEP.to_vec(),
            epochs: DEFAULT_EPOCHS,
        }
    }
}

/// Per-fold outcome of one model configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCvResult {
    pub kind: ModelKind,
    /// Neighbour count for kNN results.
    pub k: Option<usize>,
    pub fold_correct: Vec<usize>,
    pub fold_accuracies: Vec<f64>,
    /// Total correct over total tested, i.e. the fold-size weighted mean.
    pub mean_accuracy: f64,
}

impl ModelCvResult {
    fn new(kind: ModelKind, k: Option<usize>, fold_correct: Vec<usize>, fold_sizes: &[usize]) -> Self {
        let fold_accuracies = fold_correct
            .iter()
            .zip(fold_sizes)
            .map(|(&c, &n)| c as f64 / n as f64)
            .collect();
        let total: usize = fold_sizes.iter().sum();
        let correct: usize = fold_correct.iter().sum();
        Self {
            kind,
            k,
            fold_correct,
            fold_accuracies,
            mean_accuracy: correct as f64 / total as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_count: usize,
    pub seed: u64,
    pub fold_sizes: Vec<usize>,
    /// Best kNN configuration of the sweep.
    pub knn: ModelCvResult,
    pub knn_sweep: Vec<ModelCvResult>,
    pub linear: ModelCvResult,
    pub selected_kind: ModelKind,
}

impl CvReport {
    pub fn result_for(&self, kind: ModelKind) -> &ModelCvResult {
        match kind {
            ModelKind::Knn => &self.knn,
            ModelKind::Linear => &self.linear,
        }
    }

    pub fn selected(&self) -> &ModelCvResult {
        self.result_for(self.selected_kind)
    }

    /// Mean accuracy when the better of the two models is taken per fold.
    pub fn per_fold_best_accuracy(&self) -> f64 {
        let total: usize = self.fold_sizes.iter().sum();
        let correct: usize = self
            .knn
            .fold_correct
            .iter()
            .zip(&self.linear.fold_correct)
            .map(|(&a, &b)| a.max(b))
            .sum();
        correct as f64 / total as f64
    }
}

/// Splits `0..n` into `fold_count` disjoint folds after a seeded shuffle.
/// Fold sizes differ by at most one; the larger folds come first.
pub fn kfold_partition(n: usize, fold_count: usize, seed: u64) -> Result<Vec<Vec<usize>>, ClassifyError> {
    if fold_count < 2 || n < fold_count {
        return Err(ClassifyError::Partition {
            samples: n,
            folds: fold_count,
        });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / fold_count;
    let extra = n % fold_count;
    let mut folds = Vec::with_capacity(fold_count);
    let mut rest = indices.as_slice();
    for f in 0..fold_count {
        let size = base + usize::from(f < extra);
        let (fold, tail) = rest.split_at(size);
        folds.push(fold.to_vec());
        rest = tail;
    }
    Ok(folds)
}

/// Cross-validates the kNN sweep and the linear classifier on the same folds.
pub fn kfold_cv<T: Scalar>(data: &[LabeledSample<T>], config: &CvConfig) -> Result<CvReport, ClassifyError> {
    let folds = kfold_partition(data.len(), config.fold_count, config.seed)?;
    let fold_sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
    let mut in_fold = vec![0usize; data.len()];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            in_fold[i] = f;
        }
    }

    let mut knn_correct = vec![vec![0usize; folds.len()]; config.knn_sweep.len()];
    let mut linear_correct = vec![0usize; folds.len()];
    for (f, fold) in folds.iter().enumerate() {
        let train: Vec<LabeledSample<T>> = data
            .iter()
            .zip(&in_fold)
            .filter(|&(_, &g)| g != f)
            .map(|(s, _)| s.clone())
            .collect();
        for &k in &config.knn_sweep {
            if k == 0 || k > train.len() {
                return Err(ClassifyError::InvalidK {
                    k,
                    samples: train.len(),
                });
            }
        }

        let linear = linear_train(&train, config.epochs, config.seed.wrapping_add(f as u64))?;
        let max_k = config.knn_sweep.iter().copied().max().unwrap_or(1);
        let knn = KnnClassifier::new(max_k, train)?;
        for &i in fold {
            let x = data[i].features.values();
            let truth = data[i].label;
            if linear.predict(x) == truth {
                linear_correct[f] += 1;
            }
            for (slot, got) in knn.predict_for_each_k(x, &config.knn_sweep).into_iter().enumerate() {
                if got == truth {
                    knn_correct[slot][f] += 1;
                }
            }
        }
    }

    let knn_sweep: Vec<ModelCvResult> = config
        .knn_sweep
        .iter()
        .zip(knn_correct)
        .map(|(&k, correct)| ModelCvResult::new(ModelKind::Knn, Some(k), correct, &fold_sizes))
        .collect();
    // Highest mean wins; ties go to the smaller k.
    let knn = knn_sweep
        .iter()
        .max_by(|a, b| a.mean_accuracy.total_cmp(&b.mean_accuracy).then_with(|| b.k.cmp(&a.k)))
        .cloned()
        .ok_or_else(|| ClassifyError::InvalidModel("empty kNN sweep".into()))?;
    let linear = ModelCvResult::new(ModelKind::Linear, None, linear_correct, &fold_sizes);
    let selected_kind = select_better(knn.mean_accuracy, linear.mean_accuracy);
    Ok(CvReport {
        fold_count: config.fold_count,
        seed: config.seed,
        fold_sizes,
        knn,
        knn_sweep,
        linear,
        selected_kind,
    })
}

/// The more accurate model kind; an exact tie keeps kNN.
pub fn select_better(knn_accuracy: f64, linear_accuracy: f64) -> ModelKind {
    if linear_accuracy > knn_accuracy {
        ModelKind::Linear
    } else {
        ModelKind::Knn
    }
}

/// Trains the kind chosen by `report` on all of `data`.
pub fn fit_selected<T: Scalar>(
    data: &[LabeledSample<T>],
    report: &CvReport,
    config: &CvConfig,
) -> Result<TrainedModel<T>, ClassifyError> {
    let mut model = match report.selected_kind {
        ModelKind::Knn => {
            let k = report.knn.k.unwrap_or(DEFAULT_KNN_K).min(data.len());
            TrainedModel::knn(KnnClassifier::new(k, data.to_vec())?)
        }
        ModelKind::Linear => TrainedModel::linear(linear_train(data, config.epochs, config.seed)?),
    };
    model.metadata.seed = Some(config.seed);
    model.metadata.fold_accuracies = report.selected().fold_accuracies.clone();
    model.metadata.cv_mean_accuracy = Some(report.selected().mean_accuracy);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureVector, PoseLabel};
    use std::collections::HashSet;

    #[test]
    fn corpus_of_1103_splits_111_and_110() {
        let folds = kfold_partition(1103, 10, 42).unwrap();
        let sizes: Vec<_> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 111).count(), 3);
        assert_eq!(sizes.iter().filter(|&&s| s == 110).count(), 7);
        let all: HashSet<_> = folds.iter().flatten().copied().collect();
        assert_eq!(all.len(), 1103);
        assert_eq!(folds, kfold_partition(1103, 10, 42).unwrap());
        assert_ne!(folds, kfold_partition(1103, 10, 43).unwrap());
    }

    #[test]
    fn partition_rejects_degenerate_requests() {
        assert!(kfold_partition(5, 1, 0).is_err());
        assert!(kfold_partition(3, 4, 0).is_err());
        assert!(kfold_partition(4, 4, 0).is_ok());
    }

    #[test]
    fn select_better_prefers_higher_then_knn() {
        assert_eq!(select_better(0.80, 0.70), ModelKind::Knn);
        assert_eq!(select_better(0.70, 0.80), ModelKind::Linear);
        assert_eq!(select_better(0.75, 0.75), ModelKind::Knn);
    }

    #[test]
    fn well_separated_clusters_score_perfectly() {
        // Clusters 100 apart, spread below 0.1.
        let data: Vec<LabeledSample> = (0..80)
            .map(|i| {
                let label = PoseLabel::ALL[i % 4];
                let mut prefix = [0.0; 4];
                prefix[label.index()] = 100.0;
                prefix[(label.index() + 1) % 4] += (i as f64 * 0.013) % 0.1;
                LabeledSample {
                    features: FeatureVector::embed(&prefix, format!("s{i}")).unwrap(),
                    label,
                }
            })
            .collect();
        let report = kfold_cv(
            &data,
            &CvConfig {
                seed: 7,
                ..CvConfig::default()
            },
        )
        .unwrap();
        assert_eq!(report.knn.mean_accuracy, 1.0);
        assert_eq!(report.fold_sizes.iter().sum::<usize>(), 80);
        assert_eq!(report.knn_sweep.len(), 4);
    }
}

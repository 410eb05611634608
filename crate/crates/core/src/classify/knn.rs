use crate::model::PoseLabel;
use crate::scalar::{euclidean, Scalar};

use super::{ClassifyError, LabeledSample};

/// Majority-vote k-nearest-neighbour classifier over Euclidean distance.
///
/// Ties are resolved deterministically:
/// - at the k-th neighbour rank, the sample with the lower index wins;
/// - on a vote tie, the class with the smaller mean neighbour distance wins,
///   then the lower class index.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnClassifier<T: Scalar = f64> {
    k: usize,
    samples: Vec<LabeledSample<T>>,
}

impl<T: Scalar> KnnClassifier<T> {
    pub fn new(k: usize, samples: Vec<LabeledSample<T>>) -> Result<Self, ClassifyError> {
        if samples.is_empty() {
            return Err(ClassifyError::EmptyTrainingSet);
        }
        if k == 0 || k > samples.len() {
            return Err(ClassifyError::InvalidK {
                k,
                samples: samples.len(),
            });
        }
        Ok(Self { k, samples })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn samples(&self) -> &[LabeledSample<T>] {
        &self.samples
    }

    pub fn predict(&self, query: &[T]) -> PoseLabel {
        let neighbors = nearest(&self.samples, self.k, query);
        vote(&neighbors)
    }

    /// Predictions for several neighbour counts from one neighbour search.
    /// Each `k` must be in `1..=samples.len()`.
    pub fn predict_for_each_k(&self, query: &[T], ks: &[usize]) -> Vec<PoseLabel> {
        let max_k = ks.iter().copied().max().unwrap_or(0);
        let neighbors = nearest(&self.samples, max_k, query);
        ks.iter().map(|&k| vote(&neighbors[..k])).collect()
    }
}

/// The `k` nearest samples ordered by `(distance, index)`.
fn nearest<T: Scalar>(samples: &[LabeledSample<T>], k: usize, query: &[T]) -> Vec<(T, PoseLabel)> {
    let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
    for (i, sample) in samples.iter().enumerate() {
        let d = euclidean(sample.features.values(), query);
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        // Insert after every entry with distance <= d: equal distances keep
        // index order because indices arrive ascending.
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, i));
        best.truncate(k);
    }
    best.into_iter().map(|(d, i)| (d, samples[i].label)).collect()
}

fn vote<T: Scalar>(neighbors: &[(T, PoseLabel)]) -> PoseLabel {
    let mut counts = [0usize; PoseLabel::COUNT];
    let mut sums = [T::zero(); PoseLabel::COUNT];
    for &(d, label) in neighbors {
        counts[label.index()] += 1;
        sums[label.index()] += d;
    }
    let mut winner = 0;
    for c in 1..PoseLabel::COUNT {
        if counts[c] > counts[winner] {
            winner = c;
        } else if counts[c] == counts[winner] && counts[c] > 0 {
            let mean_c = sums[c] / T::from_usize_lossy(counts[c]);
            let mean_w = sums[winner] / T::from_usize_lossy(counts[winner]);
            if mean_c < mean_w {
                winner = c;
            }
        }
    }
    PoseLabel::ALL[winner]
}

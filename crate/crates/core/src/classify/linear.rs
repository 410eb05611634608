use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::PoseLabel;
use crate::scalar::Scalar;

use super::{ClassifyError, LabeledSample};

/// One weight row and bias per pose class; score = w_c . x + b_c.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LinearModel<T: Scalar = f64> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<T>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![vec![T::zero(); dim]; PoseLabel::COUNT],
            biases: vec![T::zero(); PoseLabel::COUNT],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), ClassifyError> {
        if self.weights.len() != PoseLabel::COUNT || self.biases.len() != PoseLabel::COUNT {
            return Err(ClassifyError::InvalidModel(format!(
                "linear model needs {} weight rows and biases, got {} and {}",
                PoseLabel::COUNT,
                self.weights.len(),
                self.biases.len()
            )));
        }
        if let Some(row) = self.weights.iter().position(|w| w.len() != dim) {
            return Err(ClassifyError::InvalidModel(format!(
                "weight row {row} has length {}, expected {dim}",
                self.weights[row].len()
            )));
        }
        let finite = self.weights.iter().flatten().chain(&self.biases).all(|v| v.is_finite());
        if !finite {
            return Err(ClassifyError::InvalidModel("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn scores(&self, x: &[T]) -> [T; PoseLabel::COUNT] {
        let mut out = [T::zero(); PoseLabel::COUNT];
        for (c, s) in out.iter_mut().enumerate() {
            *s = dot(&self.weights[c], x) + self.biases[c];
        }
        out
    }

    /// Arg-max class; ties go to the lowest class index.
    pub fn predict(&self, x: &[T]) -> PoseLabel {
        PoseLabel::ALL[argmax(&self.scores(x))]
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn argmax<T: Scalar>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Trains a multiclass averaged perceptron.
///
/// Each epoch visits the samples in an order drawn from a ChaCha8 stream
/// seeded with `seed`. A mistake moves the true class row towards `x` and
/// the predicted row away from it. The returned weights are the average of
/// the weights after every visit.
pub fn linear_train<T: Scalar>(
    data: &[LabeledSample<T>],
    epochs: usize,
    seed: u64,
) -> Result<LinearModel<T>, ClassifyError> {
    let Some(first) = data.first() else {
        return Err(ClassifyError::EmptyTrainingSet);
    };
    let mut present = [false; PoseLabel::COUNT];
    for s in data {
        present[s.label.index()] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(ClassifyError::MissingClass(PoseLabel::ALL[missing]));
    }

    let dim = first.features.values().len();
    let mut model = LinearModel::<T>::zeros(dim);
    // Running sum of c * update; averaged weights are w - acc / c.
    let mut acc = LinearModel::<T>::zeros(dim);
    let mut step = T::one();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = data[i].features.values();
            let truth = data[i].label.index();
            let guess = argmax(&model.scores(x));
            if guess != truth {
                for (j, &xj) in x.iter().enumerate() {
                    model.weights[truth][j] += xj;
                    model.weights[guess][j] -= xj;
                    acc.weights[truth][j] += step * xj;
                    acc.weights[guess][j] -= step * xj;
                }
                model.biases[truth] += T::one();
                model.biases[guess] -= T::one();
                acc.biases[truth] += step;
                acc.biases[guess] -= step;
            }
            step += T::one();
        }
    }

    for (w, a) in model
        .weights
        .iter_mut()
        .flatten()
        .zip(acc.weights.iter().flatten())
        .chain(model.biases.iter_mut().zip(acc.biases.iter()))
    {
        *w -= *a / step;
    }
    Ok(model)
}

//! Pose classification: kNN and a multiclass linear model over normalized
//! landmark vectors, k-fold cross-validation, and model selection.

mod cv;
mod knn;
mod linear;

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, DecodeError};
use crate::model::{FeatureVector, PoseLabel, FEATURE_DIM};
use crate::scalar::Scalar;

pub use cv::{
    fit_selected, kfold_cv, kfold_partition, select_better, CvConfig, CvReport, ModelCvResult, DEFAULT_EPOCHS,
    DEFAULT_FOLDS, DEFAULT_KNN_K, DEFAULT_KNN_SWEEP,
};
pub use knn::KnnClassifier;
pub use linear::{linear_train, LinearModel};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("class {0:?} has no training samples")]
    MissingClass(PoseLabel),
    #[error("k = {k} is invalid for {samples} training samples")]
    InvalidK { k: usize, samples: usize },
    #[error("cannot split {samples} samples into {folds} folds")]
    Partition { samples: usize, folds: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model is {actual:?}, expected {expected:?}")]
    WrongKind { expected: ModelKind, actual: ModelKind },
    #[error("decode: {0}")]
    Decode(#[from] DecodeError),
    #[error("line {line}: {source}")]
    Dataset { line: usize, source: DecodeError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LabeledSample<T: Scalar = f64> {
    pub features: FeatureVector<T>,
    pub label: PoseLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "KNN")]
    Knn,
    Linear,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub fold_accuracies: Vec<f64>,
    #[serde(default)]
    pub cv_mean_accuracy: Option<f64>,
    /// Monotone version used by the edge control channel.
    #[serde(default)]
    pub version: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classifier<T: Scalar = f64> {
    Knn(KnnClassifier<T>),
    Linear(LinearModel<T>),
}

/// A trained pose model as saved to and loaded from disk.
///
/// JSON layout: `{"kind": "KNN" | "Linear", "parameters": {...}, "metadata": {...}}`
/// where kNN parameters are `{"k", "samples"}` and linear parameters are
/// `{"weights", "biases"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "ModelFile<T>",
    into = "ModelFile<T>",
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub struct TrainedModel<T: Scalar = f64> {
    pub classifier: Classifier<T>,
    pub metadata: ModelMetadata,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct KnnParameters<T: Scalar> {
    k: usize,
    samples: Vec<LabeledSample<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct ModelFile<T: Scalar> {
    kind: ModelKind,
    parameters: serde_json::Value,
    #[serde(default)]
    metadata: ModelMetadata,
    #[serde(skip)]
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Scalar> From<TrainedModel<T>> for ModelFile<T> {
    fn from(model: TrainedModel<T>) -> Self {
        let (kind, parameters) = match model.classifier {
            Classifier::Knn(knn) => (
                ModelKind::Knn,
                serde_json::to_value(KnnParameters {
                    k: knn.k(),
                    samples: knn.samples().to_vec(),
                }),
            ),
            Classifier::Linear(linear) => (ModelKind::Linear, serde_json::to_value(linear)),
        };
        ModelFile {
            kind,
            parameters: parameters.expect("model parameters serialize"),
            metadata: model.metadata,
            _scalar: std::marker::PhantomData,
        }
    }
}

impl<T: Scalar> TryFrom<ModelFile<T>> for TrainedModel<T> {
    type Error = ClassifyError;

    fn try_from(file: ModelFile<T>) -> Result<Self, Self::Error> {
        let bad = |e: serde_json::Error| ClassifyError::InvalidModel(format!("parameters: {e}"));
        let classifier = match file.kind {
            ModelKind::Knn => {
                let p: KnnParameters<T> = serde_json::from_value(file.parameters).map_err(bad)?;
                Classifier::Knn(KnnClassifier::new(p.k, p.samples)?)
            }
            ModelKind::Linear => {
                let linear: LinearModel<T> = serde_json::from_value(file.parameters).map_err(bad)?;
                linear.validate(FEATURE_DIM)?;
                Classifier::Linear(linear)
            }
        };
        Ok(TrainedModel {
            classifier,
            metadata: file.metadata,
        })
    }
}

impl<T: Scalar> TrainedModel<T> {
    pub fn knn(classifier: KnnClassifier<T>) -> Self {
        Self {
            classifier: Classifier::Knn(classifier),
            metadata: ModelMetadata::default(),
        }
    }

    pub fn linear(model: LinearModel<T>) -> Self {
        Self {
            classifier: Classifier::Linear(model),
            metadata: ModelMetadata::default(),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.classifier {
            Classifier::Knn(_) => ModelKind::Knn,
            Classifier::Linear(_) => ModelKind::Linear,
        }
    }

    pub fn predict(&self, query: &FeatureVector<T>) -> PoseLabel {
        match &self.classifier {
            Classifier::Knn(knn) => knn.predict(query.values()),
            Classifier::Linear(linear) => linear.predict(query.values()),
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ClassifyError> {
        Ok(codec::decode(bytes)?)
    }

    pub fn load(path: &Path) -> Result<Self, ClassifyError> {
        Self::from_json(&std::fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifyError> {
        std::fs::write(path, serde_json::to_vec_pretty(self).expect("model serializes"))?;
        Ok(())
    }
}

pub fn knn_predict<T: Scalar>(model: &TrainedModel<T>, query: &FeatureVector<T>) -> Result<PoseLabel, ClassifyError> {
    match &model.classifier {
        Classifier::Knn(knn) => Ok(knn.predict(query.values())),
        Classifier::Linear(_) => Err(ClassifyError::WrongKind {
            expected: ModelKind::Knn,
            actual: ModelKind::Linear,
        }),
    }
}

pub fn linear_predict<T: Scalar>(
    model: &TrainedModel<T>,
    query: &FeatureVector<T>,
) -> Result<PoseLabel, ClassifyError> {
    match &model.classifier {
        Classifier::Linear(linear) => Ok(linear.predict(query.values())),
        Classifier::Knn(_) => Err(ClassifyError::WrongKind {
            expected: ModelKind::Linear,
            actual: ModelKind::Knn,
        }),
    }
}

/// Reads a newline-delimited `LabeledSample` dataset.
pub fn read_dataset<T: Scalar, R: BufRead>(source: R) -> Result<Vec<LabeledSample<T>>, ClassifyError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = codec::decode_str(&line).map_err(|source| ClassifyError::Dataset { line: i + 1, source })?;
        out.push(sample);
    }
    Ok(out)
}

pub fn write_dataset<T: Scalar, W: Write>(samples: &[LabeledSample<T>], mut sink: W) -> std::io::Result<()> {
    for s in samples {
        sink.write_all(&codec::encode(s))?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Vec<LabeledSample> {
        (0..8)
            .map(|i| LabeledSample {
                features: FeatureVector::embed(&[i as f64, -(i as f64) / 2.0], format!("f{i}")).unwrap(),
                label: PoseLabel::ALL[i % 4],
            })
            .collect()
    }

    #[test]
    fn knn_model_file_round_trips() {
        let mut model = TrainedModel::knn(KnnClassifier::new(3, data()).unwrap());
        model.metadata.seed = Some(4);
        let bytes = codec::encode(&model);
        let json: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(json["kind"], "KNN");
        assert_eq!(json["parameters"]["k"], 3);
        assert_eq!(TrainedModel::<f64>::from_json(&bytes).unwrap(), model);
    }

    #[test]
    fn linear_model_file_round_trips() {
        let model = TrainedModel::linear(linear_train(&data(), 3, 1).unwrap());
        let bytes = codec::encode(&model);
        assert_eq!(TrainedModel::<f64>::from_json(&bytes).unwrap(), model);
    }

    #[test]
    fn corrupt_model_files_are_rejected() {
        assert!(TrainedModel::<f64>::from_json(b"{\"kind\":\"Linear\",\"parameters\":{}}").is_err());
        let mut json: serde_json::Value = serde_json::from_slice(&codec::encode(&TrainedModel::knn(
            KnnClassifier::new(3, data()).unwrap(),
        )))
        .unwrap();
        json["parameters"]["k"] = 99.into();
        assert!(TrainedModel::<f64>::from_json(json.to_string().as_bytes()).is_err());
        assert!(TrainedModel::<f64>::from_json(b"not json").is_err());
    }

    #[test]
    fn predict_dispatch_checks_kind() {
        let model = TrainedModel::knn(KnnClassifier::new(1, data()).unwrap());
        let q = data()[2].features.clone();
        assert_eq!(knn_predict(&model, &q).unwrap(), PoseLabel::FacingDown);
        assert!(linear_predict(&model, &q).is_err());
    }

    #[test]
    fn dataset_round_trip_and_line_errors() {
        let mut buf = Vec::new();
        write_dataset(&data(), &mut buf).unwrap();
        let back: Vec<LabeledSample> = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, data());
        buf.extend_from_slice(b"{\"label\":\"Nope\"}\n");
        match read_dataset::<f64, _>(buf.as_slice()) {
            Err(ClassifyError::Dataset { line, .. }) => assert_eq!(line, 9),
            other => panic!("unexpected {other:?}"),
        }
    }
}

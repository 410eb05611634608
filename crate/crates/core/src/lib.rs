//! Core of shelfwatch: landmark features, pose classification, LOF anomaly
//! scoring and the ERP-style inventory used to corroborate suspicions.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, which is what the wire formats and the
//! services use.

pub mod anomaly;
pub mod classify;
pub mod clock;
pub mod codec;
pub mod features;
pub mod inventory;
pub mod model;
pub mod scalar;

pub use scalar::Scalar;

pub use model::{
    Alert, AlertStatus, FeatureVector, InvariantError, LandmarkFrame, Point, PoseLabel, ProductRecord,
    ReconciliationResult, SaleTransaction, ShelfObservation, Size, StaffFeedback, SuspicionEvent, Timestamp, Verdict,
    FEATURE_DIM, LANDMARK_COUNT,
};

pub type Frame = model::LandmarkFrame<f64>;
pub type Features = model::FeatureVector<f64>;
pub type Sample = classify::LabeledSample<f64>;
pub type Model = classify::TrainedModel<f64>;
pub type Detector = anomaly::StreamingLof<f64>;
pub type Window = anomaly::ReferenceWindow<f64>;

pub type Frame32 = model::LandmarkFrame<f32>;
pub type Features32 = model::FeatureVector<f32>;
pub type Sample32 = classify::LabeledSample<f32>;
pub type Model32 = classify::TrainedModel<f32>;
pub type Detector32 = anomaly::StreamingLof<f32>;

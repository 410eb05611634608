//! Domain values exchanged between the edge agent, the cloud service and the
//! inventory. Every type here is an immutable value with a JSON schema whose
//! field names match the struct fields.
//!
//! Decoding enforces the invariants listed on each type, so a value obtained
//! from [`crate::codec::decode`] is always valid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Number of face landmarks in one frame.
pub const LANDMARK_COUNT: usize = 68;
/// Length of a feature vector: all x-coordinates, then all y-coordinates.
pub const FEATURE_DIM: usize = 2 * LANDMARK_COUNT;

/// Milliseconds since the Unix epoch, UTC.
pub type Timestamp = i64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {reason}")]
pub struct InvariantError {
    pub field: &'static str,
    pub reason: String,
}

impl InvariantError {
    pub(crate) fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            reason: reason.into(),
        }
    }
}

/// An `(x, y)` pixel position, encoded as a two-element JSON array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 2]", into = "[T; 2]")]
pub struct Point<T: Copy> {
    pub x: T,
    pub y: T,
}

impl<T: Copy> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }
}

impl<T: Copy> From<[T; 2]> for Point<T> {
    fn from([x, y]: [T; 2]) -> Self {
        Self { x, y }
    }
}

impl<T: Copy> From<Point<T>> for [T; 2] {
    fn from(p: Point<T>) -> Self {
        [p.x, p.y]
    }
}

/// A `(width, height)` extent, encoded as a two-element JSON array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 2]", into = "[T; 2]")]
pub struct Size<T: Copy> {
    pub width: T,
    pub height: T,
}

impl<T: Copy> Size<T> {
    pub fn new(width: T, height: T) -> Self {
        Self { width, height }
    }
}

impl<T: Copy> From<[T; 2]> for Size<T> {
    fn from([width, height]: [T; 2]) -> Self {
        Self { width, height }
    }
}

impl<T: Copy> From<Size<T>> for [T; 2] {
    fn from(s: Size<T>) -> Self {
        [s.width, s.height]
    }
}

/// One camera frame reduced to 68 face landmarks plus the face box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawLandmarkFrame<T>",
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub struct LandmarkFrame<T: Scalar = f64> {
    pub camera_id: String,
    /// Shelf zone in view; static per camera.
    pub zone_id: String,
    pub timestamp: Timestamp,
    pub points: Vec<Point<T>>,
    pub face_origin: Point<T>,
    pub face_size: Size<T>,
    /// Opaque locator of the evidence image. Pixels never travel.
    pub frame_ref: String,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct RawLandmarkFrame<T: Scalar> {
    camera_id: String,
    zone_id: String,
    timestamp: Timestamp,
    points: Vec<Point<T>>,
    face_origin: Point<T>,
    face_size: Size<T>,
    frame_ref: String,
}

impl<T: Scalar> TryFrom<RawLandmarkFrame<T>> for LandmarkFrame<T> {
    type Error = InvariantError;

    fn try_from(raw: RawLandmarkFrame<T>) -> Result<Self, Self::Error> {
        let frame = LandmarkFrame {
            camera_id: raw.camera_id,
            zone_id: raw.zone_id,
            timestamp: raw.timestamp,
            points: raw.points,
            face_origin: raw.face_origin,
            face_size: raw.face_size,
            frame_ref: raw.frame_ref,
        };
        frame.validate()?;
        Ok(frame)
    }
}

impl<T: Scalar> LandmarkFrame<T> {
    pub fn validate(&self) -> Result<(), InvariantError> {
        if self.points.len() != LANDMARK_COUNT {
            return Err(InvariantError::new(
                "points",
                format!("expected {LANDMARK_COUNT}, got {}", self.points.len()),
            ));
        }
        if let Some(i) = self.points.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(InvariantError::new("points", format!("point {i} is not finite")));
        }
        if !(self.face_origin.x.is_finite() && self.face_origin.y.is_finite()) {
            return Err(InvariantError::new("face_origin", "not finite"));
        }
        let size = self.face_size;
        if !(size.width.is_finite() && size.height.is_finite()) || size.width <= T::zero() || size.height <= T::zero() {
            return Err(InvariantError::new(
                "face_size",
                format!(
                    "width and height must be positive, got ({}, {})",
                    size.width, size.height
                ),
            ));
        }
        Ok(())
    }
}

/// Normalized landmark coordinates relative to the face box.
///
/// Layout: `values[..68]` are x-coordinates, `values[68..]` y-coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawFeatureVector<T>",
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub struct FeatureVector<T: Scalar = f64> {
    values: Vec<T>,
    pub source_frame: String,
    pub timestamp: Timestamp,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct RawFeatureVector<T: Scalar> {
    values: Vec<T>,
    source_frame: String,
    timestamp: Timestamp,
}

impl<T: Scalar> TryFrom<RawFeatureVector<T>> for FeatureVector<T> {
    type Error = InvariantError;

    fn try_from(raw: RawFeatureVector<T>) -> Result<Self, Self::Error> {
        FeatureVector::new(raw.values, raw.source_frame, raw.timestamp)
    }
}

impl<T: Scalar> FeatureVector<T> {
    pub fn new(values: Vec<T>, source_frame: impl Into<String>, timestamp: Timestamp) -> Result<Self, InvariantError> {
        if values.len() != FEATURE_DIM {
            return Err(InvariantError::new(
                "values",
                format!("expected {FEATURE_DIM}, got {}", values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(InvariantError::new("values", format!("value {i} is not finite")));
        }
        Ok(Self {
            values,
            source_frame: source_frame.into(),
            timestamp,
        })
    }

    /// Builds a vector from a short prefix, padding the remaining
    /// coordinates with zeros. Handy for low-dimensional test fixtures.
    pub fn embed(prefix: &[T], source_frame: impl Into<String>) -> Result<Self, InvariantError> {
        if prefix.len() > FEATURE_DIM {
            return Err(InvariantError::new(
                "values",
                format!("prefix longer than {FEATURE_DIM}"),
            ));
        }
        let mut values = vec![T::zero(); FEATURE_DIM];
        values[..prefix.len()].copy_from_slice(prefix);
        Self::new(values, source_frame, 0)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn xs(&self) -> &[T] {
        &self.values[..LANDMARK_COUNT]
    }

    pub fn ys(&self) -> &[T] {
        &self.values[LANDMARK_COUNT..]
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

impl<T: Scalar> AsRef<[T]> for FeatureVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.values
    }
}

/// Head pose classes recognized by the pose classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PoseLabel {
    FacingForward,
    EyesClosed,
    FacingDown,
    FacingSideways,
}

impl PoseLabel {
    pub const COUNT: usize = 4;
    pub const ALL: [PoseLabel; 4] = [
        PoseLabel::FacingForward,
        PoseLabel::EyesClosed,
        PoseLabel::FacingDown,
        PoseLabel::FacingSideways,
    ];

    /// Class index, used for tie breaking and weight-row layout.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Edge-to-cloud notification that a frame scored as anomalous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSuspicionEvent")]
pub struct SuspicionEvent {
    pub event_id: String,
    pub camera_id: String,
    pub zone_id: String,
    pub timestamp: Timestamp,
    pub anomaly_score: f64,
    pub pose_label: Option<PoseLabel>,
    pub frame_ref: String,
}

#[derive(Deserialize)]
struct RawSuspicionEvent {
    event_id: String,
    camera_id: String,
    zone_id: String,
    timestamp: Timestamp,
    anomaly_score: f64,
    #[serde(default)]
    pose_label: Option<PoseLabel>,
    frame_ref: String,
}

impl TryFrom<RawSuspicionEvent> for SuspicionEvent {
    type Error = InvariantError;

    fn try_from(raw: RawSuspicionEvent) -> Result<Self, Self::Error> {
        let event = SuspicionEvent {
            event_id: raw.event_id,
            camera_id: raw.camera_id,
            zone_id: raw.zone_id,
            timestamp: raw.timestamp,
            anomaly_score: raw.anomaly_score,
            pose_label: raw.pose_label,
            frame_ref: raw.frame_ref,
        };
        event.validate()?;
        Ok(event)
    }
}

impl SuspicionEvent {
    pub fn validate(&self) -> Result<(), InvariantError> {
        if self.event_id.is_empty() {
            return Err(InvariantError::new("event_id", "must not be empty"));
        }
        if !self.anomaly_score.is_finite() || self.anomaly_score < 0.0 {
            return Err(InvariantError::new(
                "anomaly_score",
                format!("must be finite and >= 0, got {}", self.anomaly_score),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlertStatus {
    Open,
    Confirmed,
    Dismissed,
}

impl AlertStatus {
    pub fn is_terminal(self) -> bool {
        !matches!(self, AlertStatus::Open)
    }
}

/// Staff decision on an alert.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Confirmed,
    Dismissed,
}

impl From<Verdict> for AlertStatus {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Confirmed => AlertStatus::Confirmed,
            Verdict::Dismissed => AlertStatus::Dismissed,
        }
    }
}

/// A suspicion corroborated by a stock deficit, delivered to staff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAlert")]
pub struct Alert {
    pub alert_id: String,
    pub event: SuspicionEvent,
    pub product_id: String,
    pub expected_count: u32,
    pub observed_count: u32,
    pub deficit: u32,
    pub created_at: Timestamp,
    pub status: AlertStatus,
}

#[derive(Deserialize)]
struct RawAlert {
    alert_id: String,
    event: SuspicionEvent,
    product_id: String,
    expected_count: u32,
    observed_count: u32,
    deficit: u32,
    created_at: Timestamp,
    status: AlertStatus,
}

impl TryFrom<RawAlert> for Alert {
    type Error = InvariantError;

    fn try_from(raw: RawAlert) -> Result<Self, Self::Error> {
        let alert = Alert {
            alert_id: raw.alert_id,
            event: raw.event,
            product_id: raw.product_id,
            expected_count: raw.expected_count,
            observed_count: raw.observed_count,
            deficit: raw.deficit,
            created_at: raw.created_at,
            status: raw.status,
        };
        alert.validate()?;
        Ok(alert)
    }
}

impl Alert {
    pub fn validate(&self) -> Result<(), InvariantError> {
        let expected_deficit = i64::from(self.expected_count) - i64::from(self.observed_count);
        if self.deficit == 0 {
            return Err(InvariantError::new("deficit", "must be > 0"));
        }
        if i64::from(self.deficit) != expected_deficit {
            return Err(InvariantError::new(
                "deficit",
                format!(
                    "expected expected_count - observed_count = {expected_deficit}, got {}",
                    self.deficit
                ),
            ));
        }
        Ok(())
    }

    /// Applies a verdict. Only `Open` alerts accept one.
    pub fn transition(&mut self, verdict: Verdict) -> Result<(), AlertStatus> {
        if self.status.is_terminal() {
            return Err(self.status);
        }
        self.status = verdict.into();
        Ok(())
    }
}

/// ERP-side stock record. `expected_count` is what the shelf should hold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub product_id: String,
    pub zone_id: String,
    pub display_name: String,
    pub expected_count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSaleTransaction")]
pub struct SaleTransaction {
    /// Idempotency key.
    pub tx_id: String,
    pub product_id: String,
    pub quantity: u32,
    pub timestamp: Timestamp,
}

#[derive(Deserialize)]
struct RawSaleTransaction {
    tx_id: String,
    product_id: String,
    quantity: u32,
    timestamp: Timestamp,
}

impl TryFrom<RawSaleTransaction> for SaleTransaction {
    type Error = InvariantError;

    fn try_from(raw: RawSaleTransaction) -> Result<Self, Self::Error> {
        if raw.quantity == 0 {
            return Err(InvariantError::new("quantity", "must be >= 1"));
        }
        if raw.tx_id.is_empty() {
            return Err(InvariantError::new("tx_id", "must not be empty"));
        }
        Ok(SaleTransaction {
            tx_id: raw.tx_id,
            product_id: raw.product_id,
            quantity: raw.quantity,
            timestamp: raw.timestamp,
        })
    }
}

/// A counted shelf state from a sensor or image count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShelfObservation {
    pub zone_id: String,
    pub product_id: String,
    pub observed_count: u32,
    pub timestamp: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawReconciliationResult")]
pub struct ReconciliationResult {
    pub product_id: String,
    pub expected_count: u32,
    pub observed_count: u32,
    pub mismatch: bool,
    pub deficit: u32,
}

#[derive(Deserialize)]
struct RawReconciliationResult {
    product_id: String,
    expected_count: u32,
    observed_count: u32,
    mismatch: bool,
    deficit: u32,
}

impl TryFrom<RawReconciliationResult> for ReconciliationResult {
    type Error = InvariantError;

    fn try_from(raw: RawReconciliationResult) -> Result<Self, Self::Error> {
        let derived = ReconciliationResult::compare(raw.product_id, raw.expected_count, raw.observed_count);
        if derived.mismatch != raw.mismatch {
            return Err(InvariantError::new(
                "mismatch",
                format!("must equal observed < expected ({})", derived.mismatch),
            ));
        }
        if derived.deficit != raw.deficit {
            return Err(InvariantError::new(
                "deficit",
                format!("must equal max(0, expected - observed) = {}", derived.deficit),
            ));
        }
        Ok(derived)
    }
}

impl ReconciliationResult {
    /// Surplus on the shelf is never a mismatch.
    pub fn compare(product_id: impl Into<String>, expected_count: u32, observed_count: u32) -> Self {
        let deficit = expected_count.saturating_sub(observed_count);
        Self {
            product_id: product_id.into(),
            expected_count,
            observed_count,
            mismatch: deficit > 0,
            deficit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaffFeedback {
    pub alert_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: Option<String>,
    pub timestamp: Timestamp,
    pub operator_id: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_indices_are_stable() {
        for (i, label) in PoseLabel::ALL.iter().enumerate() {
            assert_eq!(label.index(), i);
            assert_eq!(PoseLabel::from_index(i), Some(*label));
        }
        assert_eq!(PoseLabel::from_index(4), None);
    }

    #[test]
    fn reconciliation_surplus_is_not_a_mismatch() {
        let r = ReconciliationResult::compare("p", 8, 9);
        assert!(!r.mismatch);
        assert_eq!(r.deficit, 0);
        let r = ReconciliationResult::compare("p", 8, 7);
        assert!(r.mismatch);
        assert_eq!(r.deficit, 1);
    }

    #[test]
    fn feature_vector_rejects_wrong_length_and_nan() {
        assert_eq!(
            FeatureVector::<f64>::new(vec![0.0; 135], "f", 0).unwrap_err().field,
            "values"
        );
        let mut v = vec![0.0; FEATURE_DIM];
        v[7] = f64::NAN;
        assert!(FeatureVector::new(v, "f", 0).is_err());
    }

    #[test]
    fn alert_transitions_only_from_open() {
        let event = SuspicionEvent {
            event_id: "e".into(),
            camera_id: "c".into(),
            zone_id: "z".into(),
            timestamp: 0,
            anomaly_score: 3.0,
            pose_label: None,
            frame_ref: "f".into(),
        };
        let mut alert = Alert {
            alert_id: "a".into(),
            event,
            product_id: "p".into(),
            expected_count: 5,
            observed_count: 4,
            deficit: 1,
            created_at: 0,
            status: AlertStatus::Open,
        };
        alert.transition(Verdict::Dismissed).unwrap();
        assert_eq!(alert.status, AlertStatus::Dismissed);
        assert_eq!(alert.transition(Verdict::Confirmed), Err(AlertStatus::Dismissed));
        assert_eq!(alert.status, AlertStatus::Dismissed);
    }
}

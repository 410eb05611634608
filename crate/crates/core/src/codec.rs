//! JSON encoding of the domain types.
//!
//! Decode errors carry the JSON path of the offending field, e.g.
//! `points: expected 68, got 67` or `event.anomaly_score: ...`.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct DecodeError {
    /// JSON path of the field that failed, `.` for the document root.
    pub path: String,
    pub message: String,
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path == "." || self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

pub fn encode<E: Serialize>(entity: &E) -> Vec<u8> {
    serde_json::to_vec(entity).expect("domain types always serialize")
}

pub fn encode_string<E: Serialize>(entity: &E) -> String {
    serde_json::to_string(entity).expect("domain types always serialize")
}

pub fn decode<E: DeserializeOwned>(bytes: &[u8]) -> Result<E, DecodeError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        // serde_json appends " at line L column C"; the path says more.
        let mut message = inner.to_string();
        if let Some(pos) = message.rfind(" at line ") {
            message.truncate(pos);
        }
        DecodeError { path, message }
    })?;
    de.end().map_err(|err| DecodeError {
        path: ".".into(),
        message: err.to_string(),
    })?;
    Ok(value)
}

pub fn decode_str<E: DeserializeOwned>(s: &str) -> Result<E, DecodeError> {
    decode(s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn frame(n: usize) -> LandmarkFrame {
        LandmarkFrame {
            camera_id: "cam-1".into(),
            zone_id: "zone-a".into(),
            timestamp: 1_700_000_000_000,
            points: (0..n)
                .map(|i| Point::new(i as f64 * 1.5, 200.0 - i as f64 / 3.0))
                .collect(),
            face_origin: Point::new(10.0, 20.0),
            face_size: Size::new(120.0, 140.0),
            frame_ref: "frames/000001.jpg".into(),
        }
    }

    fn event() -> SuspicionEvent {
        SuspicionEvent {
            event_id: "cam-1:42".into(),
            camera_id: "cam-1".into(),
            zone_id: "zone-a".into(),
            timestamp: 42,
            anomaly_score: 7.25,
            pose_label: Some(PoseLabel::FacingDown),
            frame_ref: "frames/42.jpg".into(),
        }
    }

    #[test]
    fn landmark_frame_round_trips_byte_identical() {
        let bytes = encode(&frame(68));
        let back: LandmarkFrame = decode(&bytes).unwrap();
        assert_eq!(back, frame(68));
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn frame_with_67_points_names_the_field() {
        let bytes = encode(&frame(67));
        let err = decode::<LandmarkFrame>(&bytes).unwrap_err();
        assert_eq!(err.to_string(), "points: expected 68, got 67");
    }

    #[test]
    fn non_positive_face_size_is_rejected() {
        let mut f = frame(68);
        f.face_size = Size::new(0.0, 10.0);
        let err = decode::<LandmarkFrame>(&encode(&f)).unwrap_err();
        assert!(err.to_string().starts_with("face_size:"), "{err}");
    }

    #[test]
    fn alert_with_zero_deficit_is_rejected() {
        let alert = Alert {
            alert_id: "a-1".into(),
            event: event(),
            product_id: "p-1".into(),
            expected_count: 3,
            observed_count: 3,
            deficit: 0,
            created_at: 50,
            status: AlertStatus::Open,
        };
        let err = decode::<Alert>(&encode(&alert)).unwrap_err();
        assert!(err.to_string().starts_with("deficit:"), "{err}");
    }

    #[test]
    fn nested_field_errors_carry_the_path() {
        let mut json: serde_json::Value = serde_json::from_slice(&encode(&event())).unwrap();
        json["anomaly_score"] = serde_json::json!("high");
        let err = decode::<SuspicionEvent>(json.to_string().as_bytes()).unwrap_err();
        assert_eq!(err.path, "anomaly_score");

        let json = r#"{"tx_id":"t","product_id":"p","quantity":-1,"timestamp":0}"#;
        let err = decode_str::<SaleTransaction>(json).unwrap_err();
        assert_eq!(err.path, "quantity");
    }

    #[test]
    fn negative_score_and_zero_quantity_are_rejected() {
        let mut e = event();
        e.anomaly_score = -0.5;
        assert!(decode::<SuspicionEvent>(&encode(&e)).is_err());
        let json = r#"{"tx_id":"t","product_id":"p","quantity":0,"timestamp":0}"#;
        assert_eq!(
            decode_str::<SaleTransaction>(json).unwrap_err().to_string(),
            "quantity: must be >= 1"
        );
    }

    #[test]
    fn trailing_garbage_is_an_error() {
        let mut bytes = encode(&event());
        bytes.extend_from_slice(b" {}");
        assert!(decode::<SuspicionEvent>(&bytes).is_err());
    }
}

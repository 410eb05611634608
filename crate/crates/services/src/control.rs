//! Control-channel messages from the cloud service to edge agents.

use serde::{Deserialize, Serialize};

/// A configuration push for one camera's agent. Versions increase
/// monotonically per camera; an agent ignores versions it already has.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlMessage {
    pub camera_id: String,
    pub version: u64,
    /// Shared secret checked by the agent.
    pub token: String,
    #[serde(default)]
    pub threshold: Option<f64>,
    /// A `TrainedModel` JSON document replacing the pose model.
    #[serde(default)]
    pub model: Option<serde_json::Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlStatus {
    /// Accepted by the cloud, not yet confirmed by the agent.
    Pending,
    Applied,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlAck {
    pub camera_id: String,
    pub version: u64,
    pub status: ControlStatus,
    #[serde(default)]
    pub threshold: Option<f64>,
}

/// Body of `POST /control/threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRequest {
    pub camera_id: String,
    pub threshold: f64,
}

/// Response to an agent polling `GET /control/<camera_id>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPoll {
    pub camera_id: String,
    pub desired_version: u64,
    pub applied_version: u64,
    pub status: ControlStatus,
    /// Present while the desired version is not yet applied.
    #[serde(default)]
    pub pending: Option<ControlMessage>,
}

/// Body of `POST /control/<camera_id>/ack`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlReceipt {
    pub version: u64,
}

#[derive(Debug, thiserror::Error)]
#[error("control link to {camera_id} unavailable: {reason}")]
pub struct LinkError {
    pub camera_id: String,
    pub reason: String,
}

/// Delivers a control message to a live agent and returns its ack.
pub trait ControlLink: Send + Sync {
    fn push(&self, message: &ControlMessage) -> Result<ControlAck, LinkError>;
}

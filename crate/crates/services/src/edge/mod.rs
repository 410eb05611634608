//! Edge agent: landmark frames in, suspicion events out.

mod outbox;
mod publish;
mod runner;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use shelfwatch_core::anomaly::{validate_threshold, AnomalyError, FrameContext, LofConfig, Observation, StreamingLof};
use shelfwatch_core::classify::{ClassifyError, TrainedModel};
use shelfwatch_core::features::{normalize, NormalizeError};
use shelfwatch_core::{LandmarkFrame, SuspicionEvent};
use thiserror::Error;

use crate::control::{ControlAck, ControlLink, ControlMessage, ControlStatus, LinkError};

pub use outbox::{Outbox, OutboxError, DEFAULT_QUEUE_CAPACITY};
pub use publish::{Backoff, BackoffConfig, LocalPublisher, PublishError, Publisher};
pub use runner::{open_source, run_agent, run_stream, ControlSource, RunOptions, RunSummary};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Anomaly(#[from] AnomalyError),
    #[error("pose model: {0}")]
    Model(#[from] ClassifyError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error("frame from camera {found} sent to agent for {expected}")]
    WrongCamera { expected: String, found: String },
    #[error(transparent)]
    Outbox(#[from] OutboxError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("control token rejected")]
    Unauthorized,
    #[error("control message for {0}")]
    WrongCamera(String),
    #[error("rejected: {0}")]
    Rejected(String),
}

fn default_replay_speed() -> f64 {
    1.0
}

fn default_queue_capacity() -> usize {
    DEFAULT_QUEUE_CAPACITY
}

fn default_poll_interval_ms() -> u64 {
    1000
}

/// Agent settings, usually read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub camera_id: String,
    pub zone_id: String,
    /// Base URL of the cloud service.
    pub endpoint: String,
    #[serde(default)]
    pub lof: LofConfig,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    /// Multiplier on recorded frame spacing; 0 replays as fast as possible.
    #[serde(default = "default_replay_speed")]
    pub replay_speed: f64,
    /// Where undelivered events survive a restart.
    #[serde(default)]
    pub queue_path: Option<PathBuf>,
    #[serde(default = "default_queue_capacity")]
    pub queue_capacity: usize,
    #[serde(default)]
    pub control_token: String,
    /// Bearer token for the cloud's HTTP API.
    #[serde(default)]
    pub auth_token: Option<String>,
    #[serde(default = "default_poll_interval_ms")]
    pub poll_interval_ms: u64,
    #[serde(default)]
    pub backoff: BackoffConfig,
}

impl AgentConfig {
    pub fn from_toml(text: &str) -> Result<Self, AgentError> {
        let config: Self = toml::from_str(text).map_err(|e| AgentError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let mut config = Self::from_toml(&std::fs::read_to_string(path)?)?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.model_path, &mut config.queue_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.camera_id.is_empty() || self.zone_id.is_empty() {
            return Err(AgentError::Config("camera_id and zone_id must not be empty".into()));
        }
        if !(self.replay_speed >= 0.0 && self.replay_speed.is_finite()) {
            return Err(AgentError::Config(format!(
                "replay_speed must be >= 0, got {}",
                self.replay_speed
            )));
        }
        if self.queue_capacity == 0 {
            return Err(AgentError::Config("queue_capacity must be positive".into()));
        }
        self.lof.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStats {
    pub frames: u64,
    pub warmup: u64,
    pub normal: u64,
    pub anomalous: u64,
}

/// Per-camera detection pipeline: normalize, score, and on an anomaly
/// label the pose and emit an event.
pub struct EdgeAgent {
    camera_id: String,
    zone_id: String,
    detector: StreamingLof<f64>,
    pose_model: Option<TrainedModel<f64>>,
    control_token: String,
    config_version: u64,
    frame_index: u64,
    stats: AgentStats,
}

impl EdgeAgent {
    pub fn new(config: &AgentConfig) -> Result<Self, AgentError> {
        config.validate()?;
        let pose_model = config.model_path.as_deref().map(TrainedModel::load).transpose()?;
        Ok(Self {
            camera_id: config.camera_id.clone(),
            zone_id: config.zone_id.clone(),
            detector: StreamingLof::new(config.lof.clone())?,
            pose_model,
            control_token: config.control_token.clone(),
            config_version: 0,
            frame_index: 0,
            stats: AgentStats::default(),
        })
    }

    pub fn with_pose_model(mut self, model: TrainedModel<f64>) -> Self {
        self.pose_model = Some(model);
        self
    }

    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }

    pub fn threshold(&self) -> f64 {
        self.detector.config().threshold
    }

    pub fn config_version(&self) -> u64 {
        self.config_version
    }

    pub fn stats(&self) -> &AgentStats {
        &self.stats
    }

    pub fn pose_model(&self) -> Option<&TrainedModel<f64>> {
        self.pose_model.as_ref()
    }

    /// Runs one frame through the pipeline. Frames that fail validation
    /// return an error and leave the detector untouched.
    pub fn process_frame(&mut self, frame: &LandmarkFrame) -> Result<Option<SuspicionEvent>, AgentError> {
        if frame.camera_id != self.camera_id {
            return Err(AgentError::WrongCamera {
                expected: self.camera_id.clone(),
                found: frame.camera_id.clone(),
            });
        }
        let features = normalize(frame)?;
        let frame_index = self.frame_index;
        self.frame_index += 1;
        self.stats.frames += 1;
        let score = match self.detector.observe(&features) {
            Observation::Warmup => {
                self.stats.warmup += 1;
                return Ok(None);
            }
            Observation::Normal { .. } => {
                self.stats.normal += 1;
                return Ok(None);
            }
            Observation::Anomalous { score } => score,
        };
        self.stats.anomalous += 1;
        let ctx = FrameContext {
            camera_id: &self.camera_id,
            zone_id: &self.zone_id,
            frame_index,
            pose_label: self.pose_model.as_ref().map(|m| m.predict(&features)),
        };
        Ok(Some(SuspicionEvent {
            event_id: ctx.event_id(frame.timestamp),
            camera_id: self.camera_id.clone(),
            zone_id: self.zone_id.clone(),
            timestamp: frame.timestamp,
            anomaly_score: score,
            pose_label: ctx.pose_label,
            frame_ref: frame.frame_ref.clone(),
        }))
    }

    /// Applies a configuration push. Stale or repeated versions are
    /// acknowledged without change; an invalid payload is rejected and the
    /// running configuration is kept.
    pub fn handle_control(&mut self, message: &ControlMessage) -> Result<ControlAck, ControlError> {
        if message.token != self.control_token {
            return Err(ControlError::Unauthorized);
        }
        if message.camera_id != self.camera_id {
            return Err(ControlError::WrongCamera(message.camera_id.clone()));
        }
        if message.version > self.config_version {
            if let Some(t) = message.threshold {
                validate_threshold(t).map_err(|e| ControlError::Rejected(e.to_string()))?;
            }
            let model = match &message.model {
                Some(doc) => {
                    let bytes = serde_json::to_vec(doc).map_err(|e| ControlError::Rejected(e.to_string()))?;
                    Some(TrainedModel::from_json(&bytes).map_err(|e| ControlError::Rejected(e.to_string()))?)
                }
                None => None,
            };
            if let Some(t) = message.threshold {
                self.detector.set_threshold(t).expect("threshold validated above");
            }
            if let Some(model) = model {
                self.pose_model = Some(model);
            }
            self.config_version = message.version;
            tracing::info!(camera_id = %self.camera_id, version = message.version, "applied control message");
        }
        Ok(ControlAck {
            camera_id: self.camera_id.clone(),
            version: self.config_version,
            status: ControlStatus::Applied,
            threshold: Some(self.threshold()),
        })
    }
}

/// An agent shared between its ingestion loop and the control plane.
/// Holding the lock for a whole frame makes control changes take effect
/// between frames.
pub type SharedAgent = Arc<Mutex<EdgeAgent>>;

/// In-process control link to an agent, with a switch that simulates the
/// network going away.
#[derive(Clone)]
pub struct LocalLink {
    agent: SharedAgent,
    online: Arc<AtomicBool>,
}

impl LocalLink {
    pub fn new(agent: SharedAgent) -> Self {
        Self {
            agent,
            online: Arc::new(AtomicBool::new(true)),
        }
    }

    pub fn set_online(&self, online: bool) {
        self.online.store(online, Ordering::SeqCst);
    }
}

impl ControlLink for LocalLink {
    fn push(&self, message: &ControlMessage) -> Result<ControlAck, LinkError> {
        let fail = |reason: String| LinkError {
            camera_id: message.camera_id.clone(),
            reason,
        };
        if !self.online.load(Ordering::SeqCst) {
            return Err(fail("offline".into()));
        }
        self.agent
            .lock()
            .expect("agent lock poisoned")
            .handle_control(message)
            .map_err(|e| fail(e.to_string()))
    }
}

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use shelfwatch_core::SuspicionEvent;
use thiserror::Error;

use crate::cloud::CloudService;

#[derive(Debug, Error)]
pub enum PublishError {
    /// Worth retrying: the cloud is down, slow or unreachable.
    #[error("cloud unavailable: {0}")]
    Unavailable(String),
    /// The cloud refused the event itself; retrying cannot help.
    #[error("event rejected: {0}")]
    Rejected(String),
}

/// Delivers one event to the cloud. Success means the cloud has it
/// durably; the outbox entry may then be dropped.
pub trait Publisher: Send {
    fn publish(&mut self, event: &SuspicionEvent) -> Result<(), PublishError>;
}

/// Publishes straight into an in-process cloud service.
#[derive(Clone)]
pub struct LocalPublisher {
    cloud: Arc<CloudService>,
    online: Arc<AtomicBool>,
}

impl LocalPublisher {
    pub fn new(cloud: Arc<CloudService>) -> Self {
        Self {
            cloud,
            online: Arc::new(AtomicBool::new(true)),
        }
    }

    /// A handle that takes the link down or up from another thread.
    pub fn switch(&self) -> Arc<AtomicBool> {
        self.online.clone()
    }
}

impl Publisher for LocalPublisher {
    fn publish(&mut self, event: &SuspicionEvent) -> Result<(), PublishError> {
        if !self.online.load(Ordering::SeqCst) {
            return Err(PublishError::Unavailable("link down".into()));
        }
        match self.cloud.on_suspicion(event) {
            Ok(_) => Ok(()),
            Err(crate::cloud::CloudError::InvalidEvent(e)) => Err(PublishError::Rejected(e)),
            Err(e) => Err(PublishError::Unavailable(e.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackoffConfig {
    pub initial_ms: u64,
    pub max_ms: u64,
}

impl Default for BackoffConfig {
    fn default() -> Self {
        Self {
            initial_ms: 100,
            max_ms: 5_000,
        }
    }
}

/// Doubling retry delay, capped.
#[derive(Clone, Debug)]
pub struct Backoff {
    config: BackoffConfig,
    next_ms: u64,
}

impl Backoff {
    pub fn new(config: BackoffConfig) -> Self {
        let next_ms = config.initial_ms.max(1);
        Self { config, next_ms }
    }

    pub fn next_delay(&mut self) -> Duration {
        let delay = self.next_ms.min(self.config.max_ms.max(1));
        self.next_ms = delay.saturating_mul(2);
        Duration::from_millis(delay)
    }

    pub fn reset(&mut self) {
        self.next_ms = self.config.initial_ms.max(1);
    }
}

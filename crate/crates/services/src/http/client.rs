//! Blocking HTTP client for the cloud API.

use std::io::{BufRead, BufReader};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use shelfwatch_core::inventory::SaleReceipt;
use shelfwatch_core::{
    codec, Alert, ProductRecord, ReconciliationResult, SaleTransaction, ShelfObservation, StaffFeedback, SuspicionEvent,
};
use thiserror::Error;

use super::{suspicion_topic, ErrorBody, TOPIC_HEADER};
use crate::cloud::{AlertPage, Disposition, ZoneStatus};
use crate::control::{ControlAck, ControlMessage, ControlPoll, ControlReceipt, ThresholdRequest};
use crate::edge::{ControlSource, PublishError, Publisher};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP {status}: {message}")]
    Status { status: u16, message: String },
    #[error("bad response: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

#[derive(Clone)]
pub struct CloudClient {
    base: String,
    agent: ureq::Agent,
    token: Option<String>,
}

impl CloudClient {
    pub fn new(base: &str, token: Option<String>) -> Self {
        Self::with_timeout(base, token, Duration::from_secs(5))
    }

    pub fn with_timeout(base: &str, token: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            base: base.trim_end_matches('/').to_owned(),
            agent: config.into(),
            token,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn read<T: DeserializeOwned>(mut response: ureq::http::Response<ureq::Body>) -> Result<T, ClientError> {
        let status = response.status().as_u16();
        let bytes = response
            .body_mut()
            .read_to_vec()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            let message = codec::decode::<ErrorBody>(&bytes)
                .map(|b| b.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
            return Err(ClientError::Status { status, message });
        }
        let bytes = if bytes.is_empty() { b"null".to_vec() } else { bytes };
        codec::decode(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let mut request = self.agent.get(&self.url(path));
        if let Some(token) = &self.token {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        let response = request.call().map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::read(response)
    }

    fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
        headers: &[(&str, String)],
    ) -> Result<T, ClientError> {
        let mut request = self
            .agent
            .post(&self.url(path))
            .header("content-type", "application/json");
        if let Some(token) = &self.token {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        for (name, value) in headers {
            request = request.header(*name, value);
        }
        let response = request
            .send(&codec::encode(body)[..])
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::read(response)
    }

    /// Publishes on the camera's suspicion topic.
    pub fn post_event(&self, event: &SuspicionEvent) -> Result<Disposition, ClientError> {
        self.post("/events", event, &[(TOPIC_HEADER, suspicion_topic(&event.camera_id))])
    }

    pub fn alerts(&self, since: usize) -> Result<AlertPage, ClientError> {
        self.get(&format!("/alerts?since={since}"))
    }

    pub fn alert(&self, alert_id: &str) -> Result<Alert, ClientError> {
        self.get(&format!("/alerts/{alert_id}"))
    }

    pub fn feedback(&self, feedback: &StaffFeedback) -> Result<Alert, ClientError> {
        self.post("/feedback", feedback, &[])
    }

    pub fn set_threshold(&self, camera_id: &str, threshold: f64) -> Result<ControlAck, ClientError> {
        let body = ThresholdRequest {
            camera_id: camera_id.to_owned(),
            threshold,
        };
        self.post("/control/threshold", &body, &[])
    }

    pub fn poll_control(&self, camera_id: &str) -> Result<ControlPoll, ClientError> {
        self.get(&format!("/control/{camera_id}"))
    }

    pub fn ack_control(&self, camera_id: &str, version: u64) -> Result<ControlAck, ClientError> {
        self.post(&format!("/control/{camera_id}/ack"), &ControlReceipt { version }, &[])
    }

    pub fn zone_status(&self, zone_id: &str) -> Result<ZoneStatus, ClientError> {
        self.get(&format!("/zones/{zone_id}/status"))
    }

    pub fn apply_sale(&self, tx: &SaleTransaction) -> Result<SaleReceipt, ClientError> {
        self.post("/inventory/sales", tx, &[])
    }

    pub fn record_observation(&self, obs: &ShelfObservation) -> Result<(), ClientError> {
        self.post::<_, Option<()>>("/inventory/observations", obs, &[])
            .map(|_| ())
    }

    pub fn product(&self, product_id: &str) -> Result<ProductRecord, ClientError> {
        self.get(&format!("/inventory/products/{product_id}"))
    }

    pub fn reconcile(&self, product_id: &str) -> Result<ReconciliationResult, ClientError> {
        self.get(&format!("/inventory/products/{product_id}/reconcile"))
    }

    /// Opens the push stream and yields alerts as they arrive. The
    /// iterator ends when the server closes the stream.
    pub fn stream_alerts(&self, since: usize) -> Result<AlertStream, ClientError> {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        let mut request = agent.get(&self.url(&format!("/alerts/stream?since={since}")));
        if let Some(token) = &self.token {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        let response = request.call().map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if status != 200 {
            return Err(ClientError::Status {
                status,
                message: "stream refused".into(),
            });
        }
        Ok(AlertStream {
            lines: Box::new(BufReader::new(response.into_body().into_reader())),
        })
    }
}

/// Server-sent alert frames.
pub struct AlertStream {
    lines: Box<dyn BufRead + Send>,
}

impl Iterator for AlertStream {
    type Item = Result<Alert, ClientError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut data = String::new();
        loop {
            let mut line = String::new();
            match self.lines.read_line(&mut line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(ClientError::Transport(e.to_string()))),
            }
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() {
                if data.is_empty() {
                    continue;
                }
                return Some(codec::decode_str(&data).map_err(|e| ClientError::Decode(e.to_string())));
            }
            if let Some(rest) = line.strip_prefix("data:") {
                if !data.is_empty() {
                    data.push('\n');
                }
                data.push_str(rest.strip_prefix(' ').unwrap_or(rest));
            }
        }
    }
}

/// Publishes events with `POST /events`.
pub struct HttpPublisher {
    client: CloudClient,
}

impl HttpPublisher {
    pub fn new(client: CloudClient) -> Self {
        Self { client }
    }
}

impl Publisher for HttpPublisher {
    fn publish(&mut self, event: &SuspicionEvent) -> Result<(), PublishError> {
        match self.client.post_event(event) {
            Ok(_) => Ok(()),
            Err(ClientError::Status {
                status: 400 | 422,
                message,
            }) => Err(PublishError::Rejected(message)),
            Err(e) => Err(PublishError::Unavailable(e.to_string())),
        }
    }
}

/// Fetches pending configuration with `GET /control/{camera_id}`.
pub struct HttpControl {
    client: CloudClient,
}

impl HttpControl {
    pub fn new(client: CloudClient) -> Self {
        Self { client }
    }
}

impl ControlSource for HttpControl {
    fn poll(&mut self, camera_id: &str) -> Result<Option<ControlMessage>, String> {
        self.client
            .poll_control(camera_id)
            .map(|p| p.pending)
            .map_err(|e| e.to_string())
    }

    fn ack(&mut self, camera_id: &str, version: u64) -> Result<(), String> {
        self.client
            .ack_control(camera_id, version)
            .map(|_| ())
            .map_err(|e| e.to_string())
    }
}

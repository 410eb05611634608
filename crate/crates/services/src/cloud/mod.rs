//! Cloud decision service: corroborates suspicion events against inventory,
//! raises and tracks alerts, and relays configuration to edge agents.

mod audit;
mod journal;
mod ledger;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use shelfwatch_core::anomaly::validate_threshold;
use shelfwatch_core::clock::Clock;
use shelfwatch_core::inventory::{Inventory, InventoryError, ZoneReconciliation};
use shelfwatch_core::{Alert, AlertStatus, StaffFeedback, SuspicionEvent, Timestamp};
use thiserror::Error;
use tokio::sync::mpsc;

use crate::control::{ControlAck, ControlLink, ControlMessage, ControlPoll, ControlStatus};

pub use audit::{audit_conjunction, audit_feedback};
use journal::Journal;
pub use ledger::{CameraControl, CloudLedger, EventOutcome, EventRecord, JournalEntry};

pub const DEFAULT_DEDUP_WINDOW_MS: i64 = 120_000;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("unknown alert {0}")]
    UnknownAlert(String),
    #[error("alert {alert_id} is already {status:?}")]
    Conflict { alert_id: String, status: AlertStatus },
    #[error("unknown camera {0}")]
    UnknownCamera(String),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("{file} line {line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum PortError {
    #[error("inventory unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Inventory(InventoryError),
}

/// The cloud's view of the inventory service.
pub trait InventoryPort: Send + Sync {
    fn reconcile_zone(&self, zone_id: &str, now: Timestamp) -> Result<ZoneReconciliation, PortError>;
}

impl InventoryPort for Inventory {
    fn reconcile_zone(&self, zone_id: &str, now: Timestamp) -> Result<ZoneReconciliation, PortError> {
        Inventory::reconcile_zone(self, zone_id, now).map_err(PortError::Inventory)
    }
}

impl<P: InventoryPort + ?Sized> InventoryPort for Arc<P> {
    fn reconcile_zone(&self, zone_id: &str, now: Timestamp) -> Result<ZoneReconciliation, PortError> {
        (**self).reconcile_zone(zone_id, now)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudConfig {
    pub dedup_window_ms: i64,
    /// Shared secret placed in control messages.
    pub control_token: String,
    /// Compact the journal after this many appended entries.
    pub compact_every: usize,
}

impl Default for CloudConfig {
    fn default() -> Self {
        Self {
            dedup_window_ms: DEFAULT_DEDUP_WINDOW_MS,
            control_token: String::new(),
            compact_every: 4096,
        }
    }
}

/// Result of submitting a suspicion event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "disposition", rename_all = "snake_case")]
pub enum Disposition {
    Alerted {
        alerts: Vec<Alert>,
        suppressed: Vec<String>,
    },
    /// Corroborated, but every mismatch already had a recent alert.
    Suppressed {
        products: Vec<String>,
    },
    Uncorroborated {
        reason: String,
    },
    /// Already processed; nothing changed.
    Duplicate,
    /// Inventory unreachable; stored and retried later.
    Parked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeliveryReceipt {
    pub subscriber: u64,
    pub delivered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneStatus {
    pub zone_id: String,
    pub open_alerts: usize,
    pub confirmed_alerts: usize,
    pub dismissed_alerts: usize,
    pub false_positives: u64,
    pub events: usize,
    pub uncorroborated_events: usize,
    pub last_event_at: Option<Timestamp>,
}

/// A page of the alert feed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlertPage {
    pub alerts: Vec<Alert>,
    /// Pass back as `since` to get only newer alerts.
    pub next: usize,
}

struct Subscriber {
    id: u64,
    tx: mpsc::UnboundedSender<Alert>,
}

struct State {
    ledger: CloudLedger,
    journal: Option<Journal>,
    since_compact: usize,
    subscribers: Vec<Subscriber>,
    next_subscriber: u64,
    links: BTreeMap<String, Arc<dyn ControlLink>>,
}

pub struct CloudService {
    state: Mutex<State>,
    inventory: Arc<dyn InventoryPort>,
    clock: Arc<dyn Clock>,
    config: CloudConfig,
}

impl CloudService {
    /// A service whose state lives only in memory.
    pub fn in_memory(inventory: Arc<dyn InventoryPort>, clock: Arc<dyn Clock>, config: CloudConfig) -> Self {
        Self::build(inventory, clock, config, CloudLedger::default(), None)
    }

    /// A service that journals to `state_dir` and recovers from it.
    pub fn open(
        inventory: Arc<dyn InventoryPort>,
        clock: Arc<dyn Clock>,
        config: CloudConfig,
        state_dir: &Path,
    ) -> Result<Self, CloudError> {
        let (journal, ledger) = Journal::open(state_dir)?;
        tracing::info!(
            events = ledger.events.len(),
            alerts = ledger.alerts.len(),
            parked = ledger.parked.len(),
            "recovered cloud state"
        );
        Ok(Self::build(inventory, clock, config, ledger, Some(journal)))
    }

    fn build(
        inventory: Arc<dyn InventoryPort>,
        clock: Arc<dyn Clock>,
        config: CloudConfig,
        ledger: CloudLedger,
        journal: Option<Journal>,
    ) -> Self {
        Self {
            state: Mutex::new(State {
                ledger,
                journal,
                since_compact: 0,
                subscribers: Vec::new(),
                next_subscriber: 1,
                links: BTreeMap::new(),
            }),
            inventory,
            clock,
            config,
        }
    }

    pub fn config(&self) -> &CloudConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().expect("cloud state lock poisoned")
    }

    /// Journals then applies. State only changes once the entries are on
    /// disk.
    fn commit(&self, state: &mut State, entries: Vec<JournalEntry>) -> Result<(), CloudError> {
        if entries.is_empty() {
            return Ok(());
        }
        let seqs = match state.journal.as_mut() {
            Some(journal) => journal.append(&entries)?,
            None => {
                let start = state.ledger.last_seq + 1;
                (start..start + entries.len() as u64).collect()
            }
        };
        for (seq, entry) in seqs.into_iter().zip(&entries) {
            state.ledger.apply(seq, entry);
        }
        state.since_compact += entries.len();
        if state.since_compact >= self.config.compact_every {
            let State { journal, ledger, .. } = state;
            if let Some(journal) = journal {
                journal.compact(ledger)?;
            }
            state.since_compact = 0;
        }
        Ok(())
    }

    /// Corroborates a suspicion event against the zone's inventory.
    ///
    /// Redelivery of a processed event id is a no-op. If the inventory
    /// cannot be reached the event is parked and retried by
    /// [`CloudService::retry_parked`].
    pub fn on_suspicion(&self, event: &SuspicionEvent) -> Result<Disposition, CloudError> {
        event.validate().map_err(|e| CloudError::InvalidEvent(e.to_string()))?;
        let mut state = self.lock();
        if state.ledger.event(&event.event_id).is_some() {
            return Ok(Disposition::Duplicate);
        }
        let mut entries = Vec::new();
        if !state.ledger.cameras.contains_key(&event.camera_id) {
            entries.push(JournalEntry::CameraSeen {
                camera_id: event.camera_id.clone(),
            });
        }
        let disposition = self.decide(&mut state, event, &mut entries);
        let created: Vec<Alert> = match &disposition {
            Disposition::Alerted { alerts, .. } => alerts.clone(),
            _ => Vec::new(),
        };
        self.commit(&mut state, entries)?;
        for alert in &created {
            Self::fan_out(&mut state, alert);
        }
        Ok(disposition)
    }

    fn decide(&self, state: &mut State, event: &SuspicionEvent, entries: &mut Vec<JournalEntry>) -> Disposition {
        let now = self.clock.now_ms();
        let results = match self.inventory.reconcile_zone(&event.zone_id, now) {
            Ok(results) => results,
            Err(PortError::Unavailable(reason)) => {
                tracing::warn!(event_id = %event.event_id, %reason, "parking event");
                if !state.ledger.is_parked(&event.event_id) {
                    entries.push(JournalEntry::EventParked { event: event.clone() });
                }
                return Disposition::Parked;
            }
            Err(PortError::Inventory(e)) => {
                let reason = e.to_string();
                entries.push(JournalEntry::EventProcessed {
                    record: EventRecord {
                        event: event.clone(),
                        decided_at: now,
                        reconciliations: Vec::new(),
                        unavailable: Vec::new(),
                        outcome: EventOutcome::Uncorroborated { reason: reason.clone() },
                    },
                });
                return Disposition::Uncorroborated { reason };
            }
        };

        let mut reconciliations = Vec::new();
        let mut unavailable = Vec::new();
        for (product_id, result) in results {
            match result {
                Ok(r) => reconciliations.push(r),
                Err(e) => unavailable.push((product_id, e.to_string())),
            }
        }

        let mut alerts = Vec::new();
        let mut suppressed = Vec::new();
        for r in reconciliations.iter().filter(|r| r.mismatch) {
            let recent = state
                .ledger
                .last_alert_at(&event.zone_id, &r.product_id)
                .is_some_and(|at| now - at < self.config.dedup_window_ms);
            if recent {
                suppressed.push(r.product_id.clone());
                continue;
            }
            alerts.push(Alert {
                alert_id: format!("alert-{:06}", state.ledger.alerts.len() + alerts.len() + 1),
                event: event.clone(),
                product_id: r.product_id.clone(),
                expected_count: r.expected_count,
                observed_count: r.observed_count,
                deficit: r.deficit,
                created_at: now,
                status: AlertStatus::Open,
            });
        }

        let (outcome, disposition) = if alerts.is_empty() && suppressed.is_empty() {
            let reason = if unavailable.is_empty() {
                "no stock deficit in zone".to_owned()
            } else {
                format!(
                    "no stock deficit among fresh observations; {} unavailable",
                    unavailable.len()
                )
            };
            (
                EventOutcome::Uncorroborated { reason: reason.clone() },
                Disposition::Uncorroborated { reason },
            )
        } else {
            let outcome = EventOutcome::Corroborated {
                alert_ids: alerts.iter().map(|a| a.alert_id.clone()).collect(),
                suppressed: suppressed.clone(),
            };
            let disposition = if alerts.is_empty() {
                Disposition::Suppressed { products: suppressed }
            } else {
                Disposition::Alerted {
                    alerts: alerts.clone(),
                    suppressed,
                }
            };
            (outcome, disposition)
        };
        entries.push(JournalEntry::EventProcessed {
            record: EventRecord {
                event: event.clone(),
                decided_at: now,
                reconciliations,
                unavailable,
                outcome,
            },
        });
        entries.extend(alerts.into_iter().map(|alert| JournalEntry::AlertCreated { alert }));
        disposition
    }

    /// Re-submits parked events in arrival order. Stops at the first event
    /// that is still parked.
    pub fn retry_parked(&self) -> Result<Vec<(String, Disposition)>, CloudError> {
        let mut done = Vec::new();
        loop {
            let next = self.lock().ledger.parked.first().cloned();
            let Some(event) = next else { break };
            let disposition = self.on_suspicion(&event)?;
            if disposition == Disposition::Parked {
                break;
            }
            done.push((event.event_id, disposition));
        }
        Ok(done)
    }

    pub fn parked_count(&self) -> usize {
        self.lock().ledger.parked.len()
    }

    /// Pushes `alert` to every live subscriber. Subscribers whose receiver
    /// is gone are dropped.
    pub fn notify_staff(&self, alert: &Alert) -> Vec<DeliveryReceipt> {
        Self::fan_out(&mut self.lock(), alert)
    }

    fn fan_out(state: &mut State, alert: &Alert) -> Vec<DeliveryReceipt> {
        let receipts: Vec<_> = state
            .subscribers
            .iter()
            .map(|s| DeliveryReceipt {
                subscriber: s.id,
                delivered: s.tx.send(alert.clone()).is_ok(),
            })
            .collect();
        state.subscribers.retain(|s| !s.tx.is_closed());
        receipts
    }

    /// Registers a push subscriber. Alerts from position `since` onward are
    /// returned as backlog; every later alert arrives on the receiver. No
    /// alert falls between the two.
    pub fn subscribe(&self, since: usize) -> (Vec<Alert>, mpsc::UnboundedReceiver<Alert>) {
        let mut state = self.lock();
        let (tx, rx) = mpsc::unbounded_channel();
        let id = state.next_subscriber;
        state.next_subscriber += 1;
        state.subscribers.push(Subscriber { id, tx });
        let backlog = state.ledger.alerts.get(since..).unwrap_or_default().to_vec();
        (backlog, rx)
    }

    pub fn alerts_since(&self, since: usize) -> AlertPage {
        let state = self.lock();
        let alerts = &state.ledger.alerts;
        AlertPage {
            alerts: alerts.get(since..).unwrap_or_default().to_vec(),
            next: alerts.len(),
        }
    }

    pub fn alert(&self, alert_id: &str) -> Option<Alert> {
        self.lock().ledger.alert(alert_id).cloned()
    }

    /// Applies a staff verdict.
    ///
    /// Resubmitting the verdict already recorded returns the alert
    /// unchanged. A different verdict on a closed alert is a conflict.
    pub fn record_feedback(&self, feedback: &StaffFeedback) -> Result<Alert, CloudError> {
        let mut state = self.lock();
        let alert = state
            .ledger
            .alert(&feedback.alert_id)
            .cloned()
            .ok_or_else(|| CloudError::UnknownAlert(feedback.alert_id.clone()))?;
        if alert.status.is_terminal() {
            if alert.status == feedback.verdict.into() {
                return Ok(alert);
            }
            return Err(CloudError::Conflict {
                alert_id: alert.alert_id,
                status: alert.status,
            });
        }
        self.commit(
            &mut state,
            vec![JournalEntry::FeedbackRecorded {
                feedback: feedback.clone(),
            }],
        )?;
        Ok(state.ledger.alert(&feedback.alert_id).cloned().expect("alert exists"))
    }

    pub fn zone_status(&self, zone_id: &str) -> ZoneStatus {
        let state = self.lock();
        let ledger = &state.ledger;
        let mut status = ZoneStatus {
            zone_id: zone_id.to_owned(),
            open_alerts: 0,
            confirmed_alerts: 0,
            dismissed_alerts: 0,
            false_positives: ledger.false_positives.get(zone_id).copied().unwrap_or(0),
            events: 0,
            uncorroborated_events: 0,
            last_event_at: None,
        };
        for alert in ledger.alerts.iter().filter(|a| a.event.zone_id == zone_id) {
            match alert.status {
                AlertStatus::Open => status.open_alerts += 1,
                AlertStatus::Confirmed => status.confirmed_alerts += 1,
                AlertStatus::Dismissed => status.dismissed_alerts += 1,
            }
        }
        for record in ledger.events.iter().filter(|r| r.event.zone_id == zone_id) {
            status.events += 1;
            if matches!(record.outcome, EventOutcome::Uncorroborated { .. }) {
                status.uncorroborated_events += 1;
            }
            status.last_event_at = status.last_event_at.max(Some(record.event.timestamp));
        }
        status
    }

    /// A copy of the durable state, for auditing.
    pub fn ledger(&self) -> CloudLedger {
        let mut ledger = self.lock().ledger.clone();
        ledger.reindex();
        ledger
    }

    /// Makes a camera known to the control plane, optionally with a live
    /// link. Any pending configuration is pushed over the new link.
    pub fn register_camera(&self, camera_id: &str, link: Option<Arc<dyn ControlLink>>) -> Result<(), CloudError> {
        {
            let mut state = self.lock();
            if !state.ledger.cameras.contains_key(camera_id) {
                self.commit(
                    &mut state,
                    vec![JournalEntry::CameraSeen {
                        camera_id: camera_id.to_owned(),
                    }],
                )?;
            }
            match link {
                Some(link) => state.links.insert(camera_id.to_owned(), link),
                None => state.links.remove(camera_id),
            };
        }
        self.flush_control(camera_id)?;
        Ok(())
    }

    /// Forgets the live link; configuration is then delivered by polling
    /// or on the next registration.
    pub fn disconnect_camera(&self, camera_id: &str) {
        self.lock().links.remove(camera_id);
    }

    /// Requests a new anomaly threshold for one camera.
    ///
    /// The request is durable before any delivery attempt. The returned
    /// ack is `Applied` only if the agent confirmed it; otherwise it stays
    /// `Pending` until the agent reconnects or polls.
    pub fn set_threshold(&self, camera_id: &str, threshold: f64) -> Result<ControlAck, CloudError> {
        validate_threshold(threshold).map_err(|e| CloudError::InvalidThreshold(e.to_string()))?;
        {
            let mut state = self.lock();
            let camera = state
                .ledger
                .cameras
                .get(camera_id)
                .ok_or_else(|| CloudError::UnknownCamera(camera_id.to_owned()))?;
            let version = camera.desired_version + 1;
            self.commit(
                &mut state,
                vec![JournalEntry::ControlRequested {
                    camera_id: camera_id.to_owned(),
                    version,
                    threshold,
                }],
            )?;
        }
        self.flush_control(camera_id)
    }

    /// Pushes the pending configuration, if any, over the live link.
    pub fn flush_control(&self, camera_id: &str) -> Result<ControlAck, CloudError> {
        let (message, link) = {
            let state = self.lock();
            let camera = state
                .ledger
                .cameras
                .get(camera_id)
                .ok_or_else(|| CloudError::UnknownCamera(camera_id.to_owned()))?;
            let ack = Self::current_ack(camera);
            match (self.pending_message(camera), state.links.get(camera_id)) {
                (Some(message), Some(link)) => (message, link.clone()),
                _ => return Ok(ack),
            }
        };
        // The link call happens outside the state lock: an in-process agent
        // may be mid-frame and should not stall the service.
        match link.push(&message) {
            Ok(ack) if ack.version >= message.version => self.acknowledge(camera_id, ack.version),
            Ok(ack) => {
                tracing::warn!(camera_id, version = ack.version, "agent acked an older version");
                self.control_status(camera_id)
            }
            Err(e) => {
                tracing::warn!(error = %e, "control push failed; left pending");
                self.control_status(camera_id)
            }
        }
    }

    /// Records that the agent runs configuration `version`.
    pub fn acknowledge(&self, camera_id: &str, version: u64) -> Result<ControlAck, CloudError> {
        let mut state = self.lock();
        let camera = state
            .ledger
            .cameras
            .get(camera_id)
            .ok_or_else(|| CloudError::UnknownCamera(camera_id.to_owned()))?;
        let version = version.min(camera.desired_version);
        if version > camera.applied_version {
            self.commit(
                &mut state,
                vec![JournalEntry::ControlApplied {
                    camera_id: camera_id.to_owned(),
                    version,
                }],
            )?;
        }
        Ok(Self::current_ack(&state.ledger.cameras[camera_id]))
    }

    pub fn control_status(&self, camera_id: &str) -> Result<ControlAck, CloudError> {
        let state = self.lock();
        state
            .ledger
            .cameras
            .get(camera_id)
            .map(Self::current_ack)
            .ok_or_else(|| CloudError::UnknownCamera(camera_id.to_owned()))
    }

    /// Answers an agent's poll. Polling makes the camera known.
    pub fn poll_control(&self, camera_id: &str) -> Result<ControlPoll, CloudError> {
        let mut state = self.lock();
        if !state.ledger.cameras.contains_key(camera_id) {
            self.commit(
                &mut state,
                vec![JournalEntry::CameraSeen {
                    camera_id: camera_id.to_owned(),
                }],
            )?;
        }
        let camera = &state.ledger.cameras[camera_id];
        Ok(ControlPoll {
            camera_id: camera_id.to_owned(),
            desired_version: camera.desired_version,
            applied_version: camera.applied_version,
            status: camera.status(),
            pending: self.pending_message(camera),
        })
    }

    fn pending_message(&self, camera: &CameraControl) -> Option<ControlMessage> {
        (camera.status() == ControlStatus::Pending).then(|| ControlMessage {
            camera_id: camera.camera_id.clone(),
            version: camera.desired_version,
            token: self.config.control_token.clone(),
            threshold: camera.threshold,
            model: None,
        })
    }

    fn current_ack(camera: &CameraControl) -> ControlAck {
        ControlAck {
            camera_id: camera.camera_id.clone(),
            version: camera.desired_version,
            status: camera.status(),
            threshold: camera.threshold,
        }
    }
}

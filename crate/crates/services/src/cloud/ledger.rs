//! The cloud's durable state, rebuilt by replaying journal entries.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use shelfwatch_core::{Alert, ReconciliationResult, StaffFeedback, SuspicionEvent, Timestamp};

use crate::control::ControlStatus;

/// What the decision step concluded for one suspicion event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum EventOutcome {
    /// At least one product in the zone showed a deficit. `alert_ids` may be
    /// empty when every mismatch fell inside the dedup window.
    Corroborated {
        alert_ids: Vec<String>,
        suppressed: Vec<String>,
    },
    Uncorroborated {
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event: SuspicionEvent,
    pub decided_at: Timestamp,
    /// Every successful reconciliation consulted for the decision.
    pub reconciliations: Vec<ReconciliationResult>,
    /// Products that could not be reconciled, with the reason.
    pub unavailable: Vec<(String, String)>,
    #[serde(flatten)]
    pub outcome: EventOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraControl {
    pub camera_id: String,
    pub desired_version: u64,
    pub applied_version: u64,
    pub threshold: Option<f64>,
}

impl CameraControl {
    pub fn new(camera_id: impl Into<String>) -> Self {
        Self {
            camera_id: camera_id.into(),
            desired_version: 0,
            applied_version: 0,
            threshold: None,
        }
    }

    pub fn status(&self) -> ControlStatus {
        if self.applied_version >= self.desired_version {
            ControlStatus::Applied
        } else {
            ControlStatus::Pending
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JournalEntry {
    EventProcessed {
        record: EventRecord,
    },
    EventParked {
        event: SuspicionEvent,
    },
    AlertCreated {
        alert: Alert,
    },
    FeedbackRecorded {
        feedback: StaffFeedback,
    },
    CameraSeen {
        camera_id: String,
    },
    ControlRequested {
        camera_id: String,
        version: u64,
        threshold: f64,
    },
    ControlApplied {
        camera_id: String,
        version: u64,
    },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CloudLedger {
    /// Sequence number of the last entry folded into this state.
    pub last_seq: u64,
    pub events: Vec<EventRecord>,
    /// Events waiting for the inventory to become reachable, oldest first.
    pub parked: Vec<SuspicionEvent>,
    /// Creation order; the position is the feed cursor.
    pub alerts: Vec<Alert>,
    pub feedback: Vec<StaffFeedback>,
    /// zone -> product -> creation time of the newest alert.
    pub last_alert_at: BTreeMap<String, BTreeMap<String, Timestamp>>,
    pub false_positives: BTreeMap<String, u64>,
    pub cameras: BTreeMap<String, CameraControl>,
    #[serde(skip)]
    event_index: HashMap<String, usize>,
    #[serde(skip)]
    alert_index: HashMap<String, usize>,
}

impl CloudLedger {
    /// Rebuilds lookup tables after deserialization.
    pub fn reindex(&mut self) {
        self.event_index = self
            .events
            .iter()
            .enumerate()
            .map(|(i, r)| (r.event.event_id.clone(), i))
            .collect();
        self.alert_index = self
            .alerts
            .iter()
            .enumerate()
            .map(|(i, a)| (a.alert_id.clone(), i))
            .collect();
    }

    pub fn event(&self, event_id: &str) -> Option<&EventRecord> {
        self.event_index.get(event_id).map(|&i| &self.events[i])
    }

    pub fn is_parked(&self, event_id: &str) -> bool {
        self.parked.iter().any(|e| e.event_id == event_id)
    }

    pub fn alert(&self, alert_id: &str) -> Option<&Alert> {
        self.alert_index.get(alert_id).map(|&i| &self.alerts[i])
    }

    pub fn alert_position(&self, alert_id: &str) -> Option<usize> {
        self.alert_index.get(alert_id).copied()
    }

    pub fn last_alert_at(&self, zone_id: &str, product_id: &str) -> Option<Timestamp> {
        self.last_alert_at.get(zone_id)?.get(product_id).copied()
    }

    pub fn feedback_for(&self, alert_id: &str) -> Option<&StaffFeedback> {
        self.feedback.iter().find(|f| f.alert_id == alert_id)
    }

    /// Applies one entry. Entries at or below `last_seq` were already
    /// applied and are skipped, which makes replay after a partial
    /// compaction safe.
    pub fn apply(&mut self, seq: u64, entry: &JournalEntry) {
        if seq <= self.last_seq {
            return;
        }
        self.last_seq = seq;
        match entry {
            JournalEntry::EventProcessed { record } => {
                let id = &record.event.event_id;
                self.parked.retain(|e| &e.event_id != id);
                if !self.event_index.contains_key(id) {
                    self.event_index.insert(id.clone(), self.events.len());
                    self.events.push(record.clone());
                }
            }
            JournalEntry::EventParked { event } => {
                if !self.is_parked(&event.event_id) && !self.event_index.contains_key(&event.event_id) {
                    self.parked.push(event.clone());
                }
            }
            JournalEntry::AlertCreated { alert } => {
                if !self.alert_index.contains_key(&alert.alert_id) {
                    self.alert_index.insert(alert.alert_id.clone(), self.alerts.len());
                    self.alerts.push(alert.clone());
                }
                let slot = self
                    .last_alert_at
                    .entry(alert.event.zone_id.clone())
                    .or_default()
                    .entry(alert.product_id.clone())
                    .or_insert(alert.created_at);
                *slot = (*slot).max(alert.created_at);
            }
            JournalEntry::FeedbackRecorded { feedback } => {
                let Some(&i) = self.alert_index.get(&feedback.alert_id) else {
                    return;
                };
                let alert = &mut self.alerts[i];
                if alert.transition(feedback.verdict).is_ok() {
                    if alert.status == shelfwatch_core::AlertStatus::Dismissed {
                        *self.false_positives.entry(alert.event.zone_id.clone()).or_default() += 1;
                    }
                    self.feedback.push(feedback.clone());
                }
            }
            JournalEntry::CameraSeen { camera_id } => {
                self.cameras
                    .entry(camera_id.clone())
                    .or_insert_with(|| CameraControl::new(camera_id.clone()));
            }
            JournalEntry::ControlRequested {
                camera_id,
                version,
                threshold,
            } => {
                let camera = self
                    .cameras
                    .entry(camera_id.clone())
                    .or_insert_with(|| CameraControl::new(camera_id.clone()));
                if *version > camera.desired_version {
                    camera.desired_version = *version;
                    camera.threshold = Some(*threshold);
                }
            }
            JournalEntry::ControlApplied { camera_id, version } => {
                if let Some(camera) = self.cameras.get_mut(camera_id) {
                    camera.applied_version = camera.applied_version.max(*version);
                }
            }
        }
    }

    /// Next alert id; ids are dense and never reused.
    pub fn next_alert_id(&self) -> String {
        format!("alert-{:06}", self.alerts.len() + 1)
    }
}

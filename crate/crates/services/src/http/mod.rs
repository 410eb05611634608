//! JSON-over-HTTP protocol between agents, staff consoles and the cloud.
//!
//! Routes:
//!
//! | method | path | body / query | reply |
//! |---|---|---|---|
//! | POST | `/events` | `SuspicionEvent` | `Disposition` |
//! | GET | `/alerts?since=N` | | `AlertPage` |
//! | GET | `/alerts/stream?since=N` | | SSE, one `Alert` JSON per frame |
//! | GET | `/alerts/{id}` | | `Alert` |
//! | POST | `/feedback` | `StaffFeedback` | `Alert` |
//! | POST | `/control/threshold` | `ThresholdRequest` | `ControlAck` |
//! | GET | `/control/{camera_id}` | | `ControlPoll` |
//! | POST | `/control/{camera_id}/ack` | `ControlReceipt` | `ControlAck` |
//! | GET | `/zones/{zone_id}/status` | | `ZoneStatus` |
//! | POST | `/inventory/sales` | `SaleTransaction` | `SaleReceipt` |
//! | POST | `/inventory/observations` | `ShelfObservation` | 204 |
//! | GET | `/inventory/products/{id}` | | `ProductRecord` |
//! | GET | `/inventory/products/{id}/reconcile` | | `ReconciliationResult` |
//!
//! Errors are `{"error": "..."}` with a 4xx or 5xx status.

pub mod client;
pub mod server;

use serde::{Deserialize, Serialize};

/// Header naming the pub/sub topic of a published event.
pub const TOPIC_HEADER: &str = "x-topic";

pub fn suspicion_topic(camera_id: &str) -> String {
    format!("suspicion/{camera_id}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

mod common;

use std::sync::mpsc;
use std::time::Duration;

use common::*;
use shelfwatch_core::{AlertStatus, SaleTransaction, ShelfObservation, StaffFeedback, Verdict};
use shelfwatch_services::cloud::Disposition;
use shelfwatch_services::control::ControlStatus;
use shelfwatch_services::edge::{PublishError, Publisher};
use shelfwatch_services::http::client::{CloudClient, HttpPublisher};

fn raw_post(url: &str, path: &str, body: &str, headers: &[(&str, &str)]) -> (u16, String) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut req = agent
        .post(&format!("{url}{path}"))
        .header("content-type", "application/json");
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let mut resp = req.send(body).unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
}

fn observation(product: &str, count: u32) -> ShelfObservation {
    ShelfObservation {
        zone_id: ZONE.into(),
        product_id: product.into(),
        observed_count: count,
        timestamp: now_ms(),
    }
}

#[test]
fn inventory_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (server, _) = start_cloud(dir.path(), local(), None);
    let client = CloudClient::new(&server.url(), None);

    let sale = SaleTransaction {
        tx_id: "tx-1".into(),
        product_id: "p1".into(),
        quantity: 3,
        timestamp: now_ms(),
    };
    let receipt = client.apply_sale(&sale).unwrap();
    assert!(receipt.applied);
    assert_eq!(receipt.record.expected_count, 7);
    assert!(!client.apply_sale(&sale).unwrap().applied);
    assert_eq!(client.product("p1").unwrap().expected_count, 7);

    let oversell = SaleTransaction {
        tx_id: "tx-2".into(),
        quantity: 8,
        ..sale.clone()
    };
    assert_eq!(client.apply_sale(&oversell).unwrap_err().status(), Some(409));
    assert_eq!(client.product("nope").unwrap_err().status(), Some(404));
    assert_eq!(client.reconcile("p1").unwrap_err().status(), Some(422));

    client.record_observation(&observation("p1", 5)).unwrap();
    let r = client.reconcile("p1").unwrap();
    assert_eq!(
        (r.expected_count, r.observed_count, r.deficit, r.mismatch),
        (7, 5, 2, true)
    );

    let wrong_zone = ShelfObservation {
        zone_id: "z2".into(),
        ..observation("p1", 1)
    };
    assert_eq!(client.record_observation(&wrong_zone).unwrap_err().status(), Some(422));
}

#[test]
fn events_alerts_stream_and_feedback() {
    let dir = tempfile::tempdir().unwrap();
    let (server, _) = start_cloud(dir.path(), local(), None);
    let client = CloudClient::new(&server.url(), None);
    client.record_observation(&observation("p1", 9)).unwrap();

    let first = event("cam:1:1", "cam", ZONE, now_ms());
    let d = client.post_event(&first).unwrap();
    assert!(
        matches!(d, Disposition::Alerted { ref alerts, .. } if alerts.len() == 1),
        "{d:?}"
    );
    assert_eq!(client.post_event(&first).unwrap(), Disposition::Duplicate);

    // Backlog first, then a live alert pushed after subscribing.
    let (tx, rx) = mpsc::channel();
    let stream = client.stream_alerts(0).unwrap();
    std::thread::spawn(move || {
        for alert in stream {
            if tx.send(alert.unwrap()).is_err() {
                break;
            }
        }
    });
    let backlog = rx.recv_timeout(Duration::from_secs(5)).unwrap();
    assert_eq!(backlog.alert_id, "alert-000001");
    client.record_observation(&observation("p2", 2)).unwrap();
    client.post_event(&event("cam:2:2", "cam", ZONE, now_ms())).unwrap();
    let live = rx.recv_timeout(Duration::from_secs(5)).unwrap();
    assert_eq!((live.product_id.as_str(), live.deficit), ("p2", 3));

    let page = client.alerts(0).unwrap();
    assert_eq!((page.alerts.len(), page.next), (2, 2));
    assert!(client.alerts(page.next).unwrap().alerts.is_empty());

    let fb = StaffFeedback {
        alert_id: live.alert_id.clone(),
        verdict: Verdict::Dismissed,
        note: Some("restock lag".into()),
        timestamp: now_ms(),
        operator_id: "op".into(),
    };
    assert_eq!(client.feedback(&fb).unwrap().status, AlertStatus::Dismissed);
    assert_eq!(client.feedback(&fb).unwrap().status, AlertStatus::Dismissed);
    let flip = StaffFeedback {
        verdict: Verdict::Confirmed,
        ..fb.clone()
    };
    assert_eq!(client.feedback(&flip).unwrap_err().status(), Some(409));
    let unknown = StaffFeedback {
        alert_id: "alert-999999".into(),
        ..fb
    };
    assert_eq!(client.feedback(&unknown).unwrap_err().status(), Some(404));
    assert_eq!(client.alert(&live.alert_id).unwrap().status, AlertStatus::Dismissed);

    let status = client.zone_status(ZONE).unwrap();
    assert_eq!(
        (status.open_alerts, status.dismissed_alerts, status.false_positives),
        (1, 1, 1)
    );
    assert_eq!(client.zone_status("zz").unwrap_err().status(), Some(404));
    server.stop().unwrap();
}

#[test]
fn malformed_events_are_rejected_with_field_paths() {
    let dir = tempfile::tempdir().unwrap();
    let (server, _) = start_cloud(dir.path(), local(), None);
    let url = server.url();

    let (status, body) = raw_post(&url, "/events", "{\"event_id\": \"e\", \"camera_id\": 4}", &[]);
    assert_eq!(status, 400);
    assert!(body.contains("camera_id"), "{body}");

    let mut e = event("e", "cam", ZONE, 0);
    e.anomaly_score = -1.0;
    let json = serde_json::to_string(&e).unwrap();
    let (status, body) = raw_post(&url, "/events", &json, &[]);
    assert_eq!(status, 400);
    assert!(body.contains("anomaly_score"), "{body}");

    let json = serde_json::to_string(&event("e", "cam", ZONE, 0)).unwrap();
    let (status, _) = raw_post(&url, "/events", &json, &[("x-topic", "suspicion/other")]);
    assert_eq!(status, 400);

    let mut publisher = HttpPublisher::new(CloudClient::new(&url, None));
    let mut bad = event("e2", "cam", ZONE, 0);
    bad.event_id.clear();
    assert!(matches!(publisher.publish(&bad), Err(PublishError::Rejected(_))));
}

#[test]
fn threshold_control_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (server, _) = start_cloud(dir.path(), local(), None);
    let client = CloudClient::new(&server.url(), None);

    assert_eq!(client.set_threshold("cam", 2.0).unwrap_err().status(), Some(404));
    let poll = client.poll_control("cam").unwrap();
    assert_eq!((poll.desired_version, poll.status), (0, ControlStatus::Applied));

    assert_eq!(client.set_threshold("cam", 0.0).unwrap_err().status(), Some(422));
    let ack = client.set_threshold("cam", 2.0).unwrap();
    assert_eq!((ack.version, ack.status), (1, ControlStatus::Pending));
    let message = client.poll_control("cam").unwrap().pending.unwrap();
    assert_eq!(
        (message.version, message.threshold, message.token.as_str()),
        (1, Some(2.0), "s3cret")
    );
    let ack = client.ack_control("cam", 1).unwrap();
    assert_eq!(ack.status, ControlStatus::Applied);
    assert!(client.poll_control("cam").unwrap().pending.is_none());
}

#[test]
fn bearer_token_guards_every_route_but_health() {
    let dir = tempfile::tempdir().unwrap();
    let (server, _) = start_cloud(dir.path(), local(), Some("t0k".into()));
    let anonymous = CloudClient::new(&server.url(), None);
    assert_eq!(anonymous.alerts(0).unwrap_err().status(), Some(401));
    assert_eq!(
        anonymous.post_event(&event("e", "cam", ZONE, 0)).unwrap_err().status(),
        Some(401)
    );
    let wrong = CloudClient::new(&server.url(), Some("nope".into()));
    assert_eq!(wrong.alerts(0).unwrap_err().status(), Some(401));
    let trusted = CloudClient::new(&server.url(), Some("t0k".into()));
    assert!(trusted.alerts(0).unwrap().alerts.is_empty());

    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let resp = agent.get(&format!("{}/healthz", server.url())).call().unwrap();
    assert_eq!(resp.status().as_u16(), 200);
}

#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shelfwatch_core::anomaly::LofConfig;
use shelfwatch_core::clock::ManualClock;
use shelfwatch_core::inventory::{Catalog, Inventory, InventoryConfig};
use shelfwatch_core::{LandmarkFrame, Point, ProductRecord, ShelfObservation, Size, SuspicionEvent};
use shelfwatch_services::edge::AgentConfig;

pub const ZONE: &str = "z1";

pub fn catalog() -> Catalog {
    let product = |id: &str, zone: &str, n: u32| ProductRecord {
        product_id: id.into(),
        zone_id: zone.into(),
        display_name: id.to_uppercase(),
        expected_count: n,
    };
    Catalog {
        products: vec![product("p1", ZONE, 10), product("p2", ZONE, 5), product("p3", "z2", 7)],
    }
}

pub fn inventory() -> Arc<Inventory> {
    Arc::new(Inventory::new(catalog(), InventoryConfig::default()).unwrap())
}

pub fn observe(inventory: &Inventory, product: &str, count: u32, ts: i64) {
    let zone = inventory.get_product(product).unwrap().zone_id;
    inventory
        .record_observation(&ShelfObservation {
            zone_id: zone,
            product_id: product.into(),
            observed_count: count,
            timestamp: ts,
        })
        .unwrap();
}

pub fn clock(at: i64) -> Arc<ManualClock> {
    Arc::new(ManualClock::new(at))
}

pub fn event(id: &str, camera: &str, zone: &str, ts: i64) -> SuspicionEvent {
    SuspicionEvent {
        event_id: id.into(),
        camera_id: camera.into(),
        zone_id: zone.into(),
        timestamp: ts,
        anomaly_score: 4.0,
        pose_label: None,
        frame_ref: format!("frame-{id}"),
    }
}

/// A face-like ring of landmarks with small per-frame jitter, or, when
/// `anomalous`, the same ring collapsed onto a line.
pub fn frame(camera: &str, ts: i64, seed: u64, anomalous: bool) -> LandmarkFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..68)
        .map(|i| {
            let angle = i as f64 * std::f64::consts::TAU / 68.0;
            let jx: f64 = rng.random_range(-1.0..1.0);
            let jy: f64 = rng.random_range(-1.0..1.0);
            let y = if anomalous { 100.0 } else { 100.0 + 60.0 * angle.sin() };
            Point::new(100.0 + 50.0 * angle.cos() + jx, y + jy)
        })
        .collect();
    LandmarkFrame {
        camera_id: camera.into(),
        zone_id: ZONE.into(),
        timestamp: ts,
        points,
        face_origin: Point::new(40.0, 30.0),
        face_size: Size::new(120.0, 140.0),
        frame_ref: format!("{camera}/{ts}"),
    }
}

pub fn small_lof() -> LofConfig {
    LofConfig {
        k: 5,
        threshold: 1.5,
        window_capacity: 40,
        warmup_min: 20,
    }
}

pub fn agent_config(camera: &str, endpoint: &str) -> AgentConfig {
    AgentConfig::from_toml(&format!(
        "camera_id = \"{camera}\"\nzone_id = \"{ZONE}\"\nendpoint = \"{endpoint}\"\ncontrol_token = \"s3cret\"\nreplay_speed = 0\n\
         [lof]\nk = 5\nthreshold = 1.5\nwindow_capacity = 40\nwarmup_min = 20\n\
         [backoff]\ninitial_ms = 5\nmax_ms = 40\n"
    ))
    .unwrap()
}

/// `normal` frames, then anomalous frames at every index in `anomalies`.
pub fn stream(camera: &str, len: usize, anomalies: &[usize]) -> Vec<LandmarkFrame> {
    (0..len)
        .map(|i| frame(camera, 1_000 + 100 * i as i64, i as u64, anomalies.contains(&i)))
        .collect()
}

pub fn now_ms() -> i64 {
    use shelfwatch_core::clock::{Clock, SystemClock};
    SystemClock.now_ms()
}

/// A cloud server whose inventory and decision state live under `dir`.
pub fn start_cloud(
    dir: &std::path::Path,
    addr: std::net::SocketAddr,
    token: Option<String>,
) -> (
    shelfwatch_services::http::server::ServerThread,
    Arc<shelfwatch_services::cloud::CloudService>,
) {
    use shelfwatch_core::clock::SystemClock;
    use shelfwatch_services::cloud::{CloudConfig, CloudService};
    use shelfwatch_services::http::server::{AppState, ServerThread};

    let inventory =
        Arc::new(Inventory::open(catalog(), InventoryConfig::default(), dir.join("inventory.wal")).unwrap());
    let config = CloudConfig {
        control_token: "s3cret".into(),
        ..CloudConfig::default()
    };
    let cloud =
        Arc::new(CloudService::open(inventory.clone(), Arc::new(SystemClock), config, &dir.join("cloud")).unwrap());
    let state = AppState::new(cloud.clone(), inventory, Arc::new(SystemClock), token);
    (ServerThread::start(addr, state).unwrap(), cloud)
}

pub fn local() -> std::net::SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

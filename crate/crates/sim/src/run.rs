//! In-process end-to-end runs and their scoring.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use shelfwatch_core::classify::{KnnClassifier, TrainedModel, DEFAULT_KNN_K};
use shelfwatch_core::clock::ManualClock;
use shelfwatch_core::inventory::{Catalog, Inventory, InventoryConfig};
use shelfwatch_core::Timestamp;
use shelfwatch_services::cloud::{audit_conjunction, audit_feedback, CloudConfig, CloudService, EventOutcome};
use shelfwatch_services::edge::{AgentConfig, EdgeAgent};

use crate::pose::generate_pose_dataset;
use crate::scenario::{generate, Scenario, StepInput, Theft};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_us: f64,
    pub max_us: f64,
}

impl LatencyStats {
    fn record(&mut self, started: Instant) {
        let us = started.elapsed().as_secs_f64() * 1e6;
        self.count += 1;
        self.mean_us += (us - self.mean_us) / self.count as f64;
        self.max_us = self.max_us.max(us);
    }
}

/// Wall-clock cost per pipeline stage. Not deterministic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLatencies {
    /// Normalize, score and label one frame.
    pub edge_frame: LatencyStats,
    /// Corroborate one event and raise its alerts.
    pub cloud_decision: LatencyStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlertSummary {
    pub alert_id: String,
    pub event_id: String,
    pub product_id: String,
    pub deficit: u32,
    pub created_at: Timestamp,
    /// Index into `thefts` of the theft this alert caught.
    pub theft: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeficitCheck {
    pub product_id: String,
    pub stolen: u32,
    pub measured_deficit: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub frames: u64,
    pub planted_anomalous_frames: u64,
    pub events_emitted: usize,
    pub events_received: usize,
    pub events_uncorroborated: usize,
    pub alerts: Vec<AlertSummary>,
    pub thefts: Vec<Theft>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub misses: usize,
    pub precision: f64,
    pub recall: f64,
    /// Per product of the camera's zone: stolen quantity against the
    /// deficit the inventory reports at the end of the run.
    pub ground_truth: Vec<DeficitCheck>,
    pub audit_violations: Vec<String>,
    /// Set when a component failed; the other fields hold what was
    /// collected up to that point.
    pub failed: Option<String>,
    pub latencies: StageLatencies,
}

impl RunReport {
    /// True when the run completed and every log-level invariant held.
    pub fn passed(&self) -> bool {
        self.failed.is_none()
            && self.audit_violations.is_empty()
            && self.ground_truth.iter().all(|g| g.stolen == g.measured_deficit)
    }

    /// The report with wall-clock fields cleared, for comparing runs.
    pub fn without_latencies(&self) -> Self {
        Self {
            latencies: StageLatencies::default(),
            ..self.clone()
        }
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let status = match (&self.failed, self.passed()) {
            (Some(reason), _) => format!("FAILED: {reason}"),
            (None, true) => "ok".to_owned(),
            (None, false) => "invariant violated".to_owned(),
        };
        let _ = writeln!(out, "scenario   {} (seed {})  {status}", self.scenario, self.seed);
        let _ = writeln!(
            out,
            "frames     {} ({} planted anomalous)",
            self.frames, self.planted_anomalous_frames
        );
        let _ = writeln!(
            out,
            "events     {} emitted, {} received, {} uncorroborated",
            self.events_emitted, self.events_received, self.events_uncorroborated
        );
        let _ = writeln!(
            out,
            "alerts     {}  TP {}  FP {}  missed {}",
            self.alerts.len(),
            self.true_positives,
            self.false_positives,
            self.misses
        );
        let _ = writeln!(out, "precision  {:.3}  recall {:.3}", self.precision, self.recall);
        for a in &self.alerts {
            let verdict = if a.theft.is_some() { "TP" } else { "FP" };
            let _ = writeln!(
                out,
                "  {} {} deficit {} at {} [{verdict}]",
                a.alert_id, a.product_id, a.deficit, a.created_at
            );
        }
        for g in &self.ground_truth {
            let _ = writeln!(
                out,
                "  {} stolen {} measured deficit {}",
                g.product_id, g.stolen, g.measured_deficit
            );
        }
        for v in &self.audit_violations {
            let _ = writeln!(out, "  violation: {v}");
        }
        let l = &self.latencies;
        let _ = writeln!(
            out,
            "latency    edge {:.1} us mean / {:.1} max, cloud {:.1} us mean / {:.1} max",
            l.edge_frame.mean_us, l.edge_frame.max_us, l.cloud_decision.mean_us, l.cloud_decision.max_us
        );
        out
    }

    /// Matches alerts to thefts in creation order: an alert catches the
    /// earliest unmatched theft of its product that happened no later.
    fn score(&mut self) {
        let mut taken = vec![false; self.thefts.len()];
        for alert in &mut self.alerts {
            alert.theft = self
                .thefts
                .iter()
                .enumerate()
                .find(|(i, t)| !taken[*i] && t.product_id == alert.product_id && t.at <= alert.created_at)
                .map(|(i, _)| i);
            if let Some(i) = alert.theft {
                taken[i] = true;
            }
        }
        self.true_positives = taken.iter().filter(|t| **t).count();
        self.false_positives = self.alerts.len() - self.true_positives;
        self.misses = self.thefts.len() - self.true_positives;
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        self.precision = ratio(self.true_positives, self.alerts.len());
        self.recall = ratio(self.true_positives, self.thefts.len());
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage}: {message}")]
struct StageError {
    stage: &'static str,
    message: String,
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> StageError {
    move |e| StageError {
        stage,
        message: e.to_string(),
    }
}

/// Replays a scenario through inventory, agent and cloud in one thread on
/// a simulated clock, then scores the alerts against the scripted thefts.
pub fn run_scenario(scenario: &Scenario) -> RunReport {
    let mut report = RunReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        ..RunReport::default()
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| drive(scenario, &mut report)));
    match outcome {
        Ok(Ok(())) => {}
        Ok(Err(e)) => report.failed = Some(e.to_string()),
        Err(panic) => {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_else(|| "panic".to_owned());
            report.failed = Some(format!("component crashed: {message}"));
        }
    }
    report.score();
    report
}

fn drive(scenario: &Scenario, report: &mut RunReport) -> Result<(), StageError> {
    let generated = generate(scenario).map_err(stage("scenario"))?;
    report.thefts = generated.thefts.clone();

    let catalog = Catalog {
        products: scenario.catalog.clone(),
    };
    let inventory = Arc::new(Inventory::new(catalog, InventoryConfig::default()).map_err(stage("inventory"))?);
    let clock = Arc::new(ManualClock::new(scenario.start_ms));
    let cloud = CloudService::in_memory(inventory.clone(), clock.clone(), CloudConfig::default());
    let config = AgentConfig {
        camera_id: scenario.camera.camera_id.clone(),
        zone_id: scenario.camera.zone_id.clone(),
        endpoint: "in-process".into(),
        lof: scenario.lof.clone(),
        model_path: None,
        replay_speed: 0.0,
        queue_path: None,
        queue_capacity: 1,
        control_token: String::new(),
        auth_token: None,
        poll_interval_ms: 1000,
        backoff: Default::default(),
    };
    let mut agent = EdgeAgent::new(&config).map_err(stage("agent"))?;
    if let Some(n) = scenario.pose_model_samples {
        let samples = generate_pose_dataset(&scenario.pose, n, scenario.seed).map_err(stage("pose model"))?;
        let knn = KnnClassifier::new(DEFAULT_KNN_K.min(n), samples).map_err(stage("pose model"))?;
        agent = agent.with_pose_model(TrainedModel::knn(knn));
    }

    let mut last = scenario.start_ms;
    for step in &generated.steps {
        match step {
            StepInput::Sale(tx) => {
                clock.set(tx.timestamp);
                inventory.apply_sale(tx).map_err(stage("inventory"))?;
            }
            StepInput::Observation(obs) => {
                clock.set(obs.timestamp);
                inventory.record_observation(obs).map_err(stage("inventory"))?;
            }
            StepInput::Frame { frame, anomalous } => {
                clock.set(frame.timestamp);
                last = frame.timestamp;
                report.frames += 1;
                report.planted_anomalous_frames += u64::from(*anomalous);
                let started = Instant::now();
                let event = agent.process_frame(frame).map_err(stage("agent"))?;
                report.latencies.edge_frame.record(started);
                if let Some(event) = event {
                    report.events_emitted += 1;
                    let started = Instant::now();
                    cloud.on_suspicion(&event).map_err(stage("cloud"))?;
                    report.latencies.cloud_decision.record(started);
                }
            }
        }
    }

    let ledger = cloud.ledger();
    report.events_received = ledger.events.len();
    report.events_uncorroborated = ledger
        .events
        .iter()
        .filter(|r| matches!(r.outcome, EventOutcome::Uncorroborated { .. }))
        .count();
    report.alerts = ledger
        .alerts
        .iter()
        .map(|a| AlertSummary {
            alert_id: a.alert_id.clone(),
            event_id: a.event.event_id.clone(),
            product_id: a.product_id.clone(),
            deficit: a.deficit,
            created_at: a.created_at,
            theft: None,
        })
        .collect();
    report.audit_violations = audit_conjunction(&ledger);
    report.audit_violations.extend(audit_feedback(&ledger));

    let mut stolen: BTreeMap<&str, u32> = BTreeMap::new();
    for t in &generated.thefts {
        *stolen.entry(t.product_id.as_str()).or_default() += t.quantity;
    }
    for product_id in inventory
        .products_in_zone(&scenario.camera.zone_id)
        .map_err(stage("inventory"))?
    {
        let r = inventory.reconcile(product_id, last).map_err(stage("inventory"))?;
        report.ground_truth.push(DeficitCheck {
            product_id: product_id.clone(),
            stolen: stolen.get(product_id.as_str()).copied().unwrap_or(0),
            measured_deficit: r.deficit,
        });
    }
    Ok(())
}

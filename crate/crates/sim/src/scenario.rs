//! Scenario files and the deterministic streams generated from them.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use shelfwatch_core::anomaly::LofConfig;
use shelfwatch_core::codec::{self, DecodeError};
use shelfwatch_core::{LandmarkFrame, PoseLabel, ProductRecord, SaleTransaction, ShelfObservation, Timestamp};

use crate::pose::{anomalous_frame, pose_frame, FrameMeta, PoseParams};

/// RNG stream of the camera's normal frames.
const CAMERA_STREAM: u64 = 1;
/// Unscripted anomaly bursts get streams from here on, one per burst.
const BURST_STREAM_BASE: u64 = 1_000;
/// Customer `c` draws from streams `CUSTOMER_STREAM_BASE * (c + 1) + action`.
const CUSTOMER_STREAM_BASE: u64 = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario: {0}")]
    Decode(#[from] DecodeError),
    #[error("scenario {name}: {reason}")]
    Invalid { name: String, reason: String },
    #[error("unknown built-in scenario {0}")]
    UnknownBuiltin(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_frame_interval() -> i64 {
    100
}

fn default_observation_every() -> u64 {
    10
}

fn default_conceal_delay() -> i64 {
    1_500
}

fn default_burst_frames() -> u32 {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub camera_id: String,
    pub zone_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Browse {
        at_ms: i64,
    },
    /// Takes the item and pays: shelf and ERP both drop by `quantity`.
    Purchase {
        at_ms: i64,
        product_id: String,
        quantity: u32,
    },
    /// Takes the item without paying. The shelf drops at `at_ms`; the
    /// concealing movement shows up as `anomalous_frames` odd frames
    /// starting `conceal_delay_ms` later.
    Steal {
        at_ms: i64,
        product_id: String,
        quantity: u32,
        #[serde(default = "default_burst_frames")]
        anomalous_frames: u32,
        #[serde(default = "default_conceal_delay")]
        conceal_delay_ms: i64,
    },
}

impl Action {
    pub fn at_ms(&self) -> i64 {
        match self {
            Action::Browse { at_ms } | Action::Purchase { at_ms, .. } | Action::Steal { at_ms, .. } => *at_ms,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Customer {
    pub customer_id: String,
    pub actions: Vec<Action>,
}

/// Odd behaviour with no theft behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyBurst {
    pub at_ms: i64,
    pub frames: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub start_ms: Timestamp,
    /// Times in actions and bursts are offsets from `start_ms`.
    pub duration_ms: i64,
    #[serde(default = "default_frame_interval")]
    pub frame_interval_ms: i64,
    /// Shelf sensors report every this many frames.
    #[serde(default = "default_observation_every")]
    pub observation_every_frames: u64,
    pub camera: CameraSpec,
    #[serde(default)]
    pub lof: LofConfig,
    #[serde(default)]
    pub pose: PoseParams,
    /// Train a pose model on this many synthetic samples and let the agent
    /// label events with it.
    #[serde(default)]
    pub pose_model_samples: Option<usize>,
    pub catalog: Vec<ProductRecord>,
    #[serde(default)]
    pub customers: Vec<Customer>,
    #[serde(default)]
    pub anomaly_bursts: Vec<AnomalyBurst>,
}

const BUILTINS: [(&str, &str); 4] = [
    ("clean-retail", include_str!("../scenarios/clean-retail.json")),
    ("single-theft", include_str!("../scenarios/single-theft.json")),
    (
        "anomaly-without-theft",
        include_str!("../scenarios/anomaly-without-theft.json"),
    ),
    (
        "theft-without-anomaly",
        include_str!("../scenarios/theft-without-anomaly.json"),
    ),
];

impl Scenario {
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTINS.iter().map(|(name, _)| *name)
    }

    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        let (_, text) = BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ScenarioError::UnknownBuiltin(name.to_owned()))?;
        Self::from_json(text.as_bytes())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ScenarioError> {
        let scenario: Self = codec::decode(bytes)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// A file path, or the name of a built-in scenario.
    pub fn load(spec: &str) -> Result<Self, ScenarioError> {
        let path = Path::new(spec);
        if path.exists() {
            return Self::from_json(&std::fs::read(path)?);
        }
        Self::builtin(spec)
    }

    fn invalid(&self, reason: impl Into<String>) -> ScenarioError {
        ScenarioError::Invalid {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration_ms <= 0 || self.frame_interval_ms <= 0 {
            return Err(self.invalid("duration_ms and frame_interval_ms must be positive"));
        }
        if self.observation_every_frames == 0 {
            return Err(self.invalid("observation_every_frames must be positive"));
        }
        self.lof.validate().map_err(|e| self.invalid(e.to_string()))?;
        self.pose.validate().map_err(|e| self.invalid(e.to_string()))?;
        let stocked: Vec<_> = self
            .catalog
            .iter()
            .filter(|p| p.zone_id == self.camera.zone_id)
            .map(|p| p.product_id.as_str())
            .collect();
        for customer in &self.customers {
            for action in &customer.actions {
                if !(0..self.duration_ms).contains(&action.at_ms()) {
                    return Err(self.invalid(format!("{} acts outside the run", customer.customer_id)));
                }
                let product = match action {
                    Action::Purchase {
                        product_id, quantity, ..
                    }
                    | Action::Steal {
                        product_id, quantity, ..
                    } => {
                        if *quantity == 0 {
                            return Err(self.invalid("quantities must be positive"));
                        }
                        product_id
                    }
                    Action::Browse { .. } => continue,
                };
                if !stocked.contains(&product.as_str()) {
                    return Err(self.invalid(format!("{product} is not stocked in the camera's zone")));
                }
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration_ms as u64).div_ceil(self.frame_interval_ms as u64)
    }
}

/// A scripted theft, as ground truth for scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theft {
    pub customer_id: String,
    pub product_id: String,
    pub quantity: u32,
    pub at: Timestamp,
    pub anomalous_frames: u32,
}

/// Everything that happens in a run, in tick order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepInput {
    Sale(SaleTransaction),
    Observation(ShelfObservation),
    Frame { frame: LandmarkFrame, anomalous: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRun {
    pub steps: Vec<StepInput>,
    pub thefts: Vec<Theft>,
}

impl GeneratedRun {
    pub fn frames(&self) -> impl Iterator<Item = &LandmarkFrame> {
        self.steps.iter().filter_map(|s| match s {
            StepInput::Frame { frame, .. } => Some(frame),
            _ => None,
        })
    }

    /// The landmark stream as newline-delimited JSON.
    pub fn frames_ndjson(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for frame in self.frames() {
            out.extend_from_slice(&codec::encode(frame));
            out.push(b'\n');
        }
        out
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Expands a scenario into its timeline. Within a tick, scripted actions
/// come first, then the shelf report, then the camera frame.
pub fn generate(scenario: &Scenario) -> Result<GeneratedRun, ScenarioError> {
    scenario.validate()?;
    let interval = scenario.frame_interval_ms;
    let ticks = scenario.frame_count();

    let mut actions: Vec<(i64, usize, usize, &Action)> = Vec::new();
    for (c, customer) in scenario.customers.iter().enumerate() {
        for (a, action) in customer.actions.iter().enumerate() {
            actions.push((action.at_ms(), c, a, action));
        }
    }
    actions.sort_by_key(|&(at, c, a, _)| (at, c, a));

    // tick -> (rng stream, base pose) for each planted anomalous frame.
    let mut planted: BTreeMap<u64, (u64, PoseLabel)> = BTreeMap::new();
    let tick_of = |offset: i64| (offset.max(0) as u64).div_ceil(interval as u64);
    let mut plant = |start: i64, frames: u32, stream: u64| {
        let mut pick = stream_rng(scenario.seed, stream);
        for f in 0..frames as u64 {
            let base = PoseLabel::ALL[pick.random_range(0..PoseLabel::COUNT)];
            planted.entry(tick_of(start) + f).or_insert((stream, base));
        }
    };
    for (b, burst) in scenario.anomaly_bursts.iter().enumerate() {
        plant(burst.at_ms, burst.frames, BURST_STREAM_BASE + b as u64);
    }
    let mut thefts = Vec::new();
    for &(_, c, a, action) in &actions {
        if let Action::Steal {
            at_ms,
            product_id,
            quantity,
            anomalous_frames,
            conceal_delay_ms,
        } = action
        {
            plant(
                at_ms + conceal_delay_ms,
                *anomalous_frames,
                CUSTOMER_STREAM_BASE * (c as u64 + 1) + a as u64,
            );
            thefts.push(Theft {
                customer_id: scenario.customers[c].customer_id.clone(),
                product_id: product_id.clone(),
                quantity: *quantity,
                at: scenario.start_ms + at_ms,
                anomalous_frames: *anomalous_frames,
            });
        }
    }

    let mut shelf: BTreeMap<&str, u32> = scenario
        .catalog
        .iter()
        .filter(|p| p.zone_id == scenario.camera.zone_id)
        .map(|p| (p.product_id.as_str(), p.expected_count))
        .collect();
    let mut camera_rng = stream_rng(scenario.seed, CAMERA_STREAM);
    let mut anomaly_rngs: BTreeMap<u64, ChaCha8Rng> = BTreeMap::new();
    let mut deck: Vec<PoseLabel> = Vec::with_capacity(PoseLabel::COUNT);
    let mut steps = Vec::new();
    let mut next_action = 0;
    for tick in 0..ticks {
        let offset = tick as i64 * interval;
        let now = scenario.start_ms + offset;
        while let Some(&(at, c, a, action)) = actions.get(next_action) {
            if at > offset {
                break;
            }
            next_action += 1;
            match action {
                Action::Browse { .. } => {}
                Action::Purchase {
                    product_id, quantity, ..
                } => {
                    steps.push(StepInput::Sale(SaleTransaction {
                        tx_id: format!("{}:{}:{a}", scenario.name, scenario.customers[c].customer_id),
                        product_id: product_id.clone(),
                        quantity: *quantity,
                        timestamp: now,
                    }));
                    let count = shelf.get_mut(product_id.as_str()).expect("validated product");
                    *count = count.saturating_sub(*quantity);
                }
                Action::Steal {
                    product_id, quantity, ..
                } => {
                    let count = shelf.get_mut(product_id.as_str()).expect("validated product");
                    *count = count.saturating_sub(*quantity);
                }
            }
        }
        if tick % scenario.observation_every_frames == 0 || tick + 1 == ticks {
            for (product_id, count) in &shelf {
                steps.push(StepInput::Observation(ShelfObservation {
                    zone_id: scenario.camera.zone_id.clone(),
                    product_id: (*product_id).to_owned(),
                    observed_count: *count,
                    timestamp: now,
                }));
            }
        }
        let meta = || FrameMeta {
            camera_id: &scenario.camera.camera_id,
            zone_id: &scenario.camera.zone_id,
            timestamp: now,
            frame_ref: format!("{}/{}/{tick:06}", scenario.name, scenario.camera.camera_id),
        };
        // Poses are dealt from shuffled decks of all four, keeping the classes
        // balanced over any stretch of frames. The camera stream advances on
        // every tick so planted frames do not shift the normal frames.
        if deck.is_empty() {
            deck.extend(PoseLabel::ALL);
            deck.shuffle(&mut camera_rng);
        }
        let label = deck.pop().expect("refilled");
        let normal = pose_frame(label, &scenario.pose, &mut camera_rng, meta());
        let step = match planted.get(&tick) {
            Some(&(stream, base)) => {
                let rng = anomaly_rngs
                    .entry(stream)
                    .or_insert_with(|| stream_rng(scenario.seed, stream + (1 << 40)));
                StepInput::Frame {
                    frame: anomalous_frame(base, &scenario.pose, rng, meta()),
                    anomalous: true,
                }
            }
            None => StepInput::Frame {
                frame: normal,
                anomalous: false,
            },
        };
        steps.push(step);
    }
    Ok(GeneratedRun { steps, thefts })
}

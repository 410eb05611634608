//! LOF anomaly scoring and the sliding-window streaming detector.

mod lof;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FeatureVector, PoseLabel, SuspicionEvent};
use crate::scalar::{euclidean, Scalar};

pub use lof::lof_score;

use lof::{check_shape, score_with_table, DistanceTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnomalyError {
    #[error("reference set has {have} points, need at least {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid LOF configuration: {0}")]
    InvalidConfig(String),
}

pub const DEFAULT_NEIGHBORS: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 1.5;
pub const DEFAULT_WINDOW_CAPACITY: usize = 512;
pub const DEFAULT_WARMUP_MIN: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LofConfig {
    pub k: usize,
    /// Scores strictly above this are anomalous.
    pub threshold: f64,
    pub window_capacity: usize,
    /// Frames absorbed before scoring starts.
    pub warmup_min: usize,
}

impl Default for LofConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_NEIGHBORS,
            threshold: DEFAULT_THRESHOLD,
            window_capacity: DEFAULT_WINDOW_CAPACITY,
            warmup_min: DEFAULT_WARMUP_MIN,
        }
    }
}

impl LofConfig {
    pub fn validate(&self) -> Result<(), AnomalyError> {
        let bad = |msg: String| Err(AnomalyError::InvalidConfig(msg));
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        validate_threshold(self.threshold)?;
        if self.window_capacity < self.k + 1 {
            return bad(format!("window_capacity {} < k + 1", self.window_capacity));
        }
        if self.warmup_min < self.k + 1 {
            return bad(format!("warmup_min {} < k + 1", self.warmup_min));
        }
        if self.warmup_min > self.window_capacity {
            return bad(format!(
                "warmup_min {} exceeds window_capacity {}",
                self.warmup_min, self.window_capacity
            ));
        }
        Ok(())
    }
}

pub fn validate_threshold(threshold: f64) -> Result<(), AnomalyError> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(AnomalyError::InvalidConfig(format!(
            "threshold must be finite and > 0, got {threshold}"
        )));
    }
    Ok(())
}

/// Bounded FIFO of reference vectors with a cached distance matrix.
///
/// Inserting costs one distance per resident vector; eviction is strictly
/// oldest-first.
#[derive(Clone, Debug)]
pub struct ReferenceWindow<T: Scalar = f64> {
    capacity: usize,
    slots: Vec<Vec<T>>,
    /// Slot ids, oldest first.
    order: VecDeque<usize>,
    distances: Vec<T>,
}

impl<T: Scalar> ReferenceWindow<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self {
            capacity,
            slots: Vec::with_capacity(capacity),
            order: VecDeque::with_capacity(capacity),
            distances: vec![T::zero(); capacity * capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.slots.first().map(Vec::len)
    }

    /// Resident vectors, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.order.iter().map(|&s| self.slots[s].as_slice())
    }

    /// Appends `values`, returning the evicted oldest vector when full.
    pub fn push(&mut self, values: Vec<T>) -> Result<Option<Vec<T>>, AnomalyError> {
        if let Some(dim) = self.dim() {
            if values.len() != dim {
                return Err(AnomalyError::DimensionMismatch {
                    expected: dim,
                    found: values.len(),
                });
            }
        }
        let (slot, evicted) = if self.order.len() == self.capacity {
            let slot = self.order.pop_front().expect("full window is non-empty");
            (slot, Some(std::mem::replace(&mut self.slots[slot], values)))
        } else {
            self.slots.push(values);
            (self.slots.len() - 1, None)
        };
        for &other in &self.order {
            let d = euclidean(&self.slots[slot], &self.slots[other]);
            self.distances[slot * self.capacity + other] = d;
            self.distances[other * self.capacity + slot] = d;
        }
        self.distances[slot * self.capacity + slot] = T::zero();
        self.order.push_back(slot);
        Ok(evicted)
    }

    /// LOF of `query` against the current contents.
    pub fn score(&self, k: usize, query: &[T]) -> Result<T, AnomalyError> {
        check_shape(self.len(), k)?;
        if let Some(dim) = self.dim() {
            if query.len() != dim {
                return Err(AnomalyError::DimensionMismatch {
                    expected: dim,
                    found: query.len(),
                });
            }
        }
        let to_query: Vec<T> = self.iter().map(|p| euclidean(p, query)).collect();
        Ok(score_with_table(self, k, &to_query))
    }
}

impl<T: Scalar> DistanceTable<T> for ReferenceWindow<T> {
    fn len(&self) -> usize {
        self.order.len()
    }

    fn distance(&self, i: usize, j: usize) -> T {
        self.distances[self.order[i] * self.capacity + self.order[j]]
    }
}

/// What the detector did with one feature vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observation<T> {
    /// Absorbed into the window without scoring.
    Warmup,
    /// Scored at or below the threshold and absorbed.
    Normal { score: T },
    /// Scored above the threshold; the window is left untouched.
    Anomalous { score: T },
}

impl<T: Copy> Observation<T> {
    pub fn score(&self) -> Option<T> {
        match *self {
            Observation::Warmup => None,
            Observation::Normal { score } | Observation::Anomalous { score } => Some(score),
        }
    }

    pub fn is_anomalous(&self) -> bool {
        matches!(self, Observation::Anomalous { .. })
    }
}

/// Identifies where a frame came from, for building suspicion events.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameContext<'a> {
    pub camera_id: &'a str,
    pub zone_id: &'a str,
    /// Position of the frame in its camera stream.
    pub frame_index: u64,
    pub pose_label: Option<PoseLabel>,
}

impl FrameContext<'_> {
    /// Stable across replays of the same stream, so the cloud can drop
    /// redelivered events.
    pub fn event_id(&self, timestamp: i64) -> String {
        format!("{}:{}:{}", self.camera_id, timestamp, self.frame_index)
    }
}

/// Sliding-window LOF over a camera's feature stream.
///
/// The window holds recent normal behaviour. Anomalous vectors are reported
/// and kept out of the window so they cannot become the new normal.
#[derive(Clone, Debug)]
pub struct StreamingLof<T: Scalar = f64> {
    config: LofConfig,
    window: ReferenceWindow<T>,
}

impl<T: Scalar> StreamingLof<T> {
    pub fn new(config: LofConfig) -> Result<Self, AnomalyError> {
        config.validate()?;
        Ok(Self {
            window: ReferenceWindow::new(config.window_capacity),
            config,
        })
    }

    pub fn config(&self) -> &LofConfig {
        &self.config
    }

    pub fn window(&self) -> &ReferenceWindow<T> {
        &self.window
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<(), AnomalyError> {
        validate_threshold(threshold)?;
        self.config.threshold = threshold;
        Ok(())
    }

    pub fn observe(&mut self, feature: &FeatureVector<T>) -> Observation<T> {
        let values = feature.values();
        if self.window.len() < self.config.warmup_min {
            self.absorb(values);
            return Observation::Warmup;
        }
        let score = self
            .window
            .score(self.config.k, values)
            .expect("window past warmup holds more than k vectors of feature dimension");
        if score > T::from_f64_lossy(self.config.threshold) {
            Observation::Anomalous { score }
        } else {
            self.absorb(values);
            Observation::Normal { score }
        }
    }

    /// Observes a frame and turns an anomalous verdict into a suspicion
    /// event.
    pub fn observe_event(&mut self, feature: &FeatureVector<T>, ctx: &FrameContext<'_>) -> Option<SuspicionEvent> {
        match self.observe(feature) {
            Observation::Anomalous { score } => Some(SuspicionEvent {
                event_id: ctx.event_id(feature.timestamp),
                camera_id: ctx.camera_id.to_owned(),
                zone_id: ctx.zone_id.to_owned(),
                timestamp: feature.timestamp,
                anomaly_score: score.to_f64_lossy().min(f64::MAX),
                pose_label: ctx.pose_label,
                frame_ref: feature.source_frame.clone(),
            }),
            _ => None,
        }
    }

    fn absorb(&mut self, values: &[T]) {
        self.window
            .push(values.to_vec())
            .expect("feature vectors share one dimension");
    }
}

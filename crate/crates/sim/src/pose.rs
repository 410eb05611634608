//! Synthetic faces: four pose templates on the 68-point landmark layout
//! (jaw 0-16, brows 17-26, nose 27-35, eyes 36-47, mouth 48-67) plus
//! per-point Gaussian jitter.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use shelfwatch_core::classify::LabeledSample;
use shelfwatch_core::features::normalize;
use shelfwatch_core::{LandmarkFrame, Point, PoseLabel, Size, Timestamp, LANDMARK_COUNT};

/// Jitter used for the benchmark dataset, in pixels of a 200 x 240 face.
pub const DEFAULT_SIGMA: f64 = 1.5;
pub const DEFAULT_DATASET_SEED: u64 = 1103;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseParams {
    /// Standard deviation of the per-coordinate jitter, in pixels.
    pub sigma: f64,
    pub face_origin: Point<f64>,
    pub face_size: Size<f64>,
}

impl Default for PoseParams {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            face_origin: Point::new(100.0, 80.0),
            face_size: Size::new(200.0, 240.0),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid pose parameters: {0}")]
pub struct PoseError(String);

impl PoseParams {
    pub fn validate(&self) -> Result<(), PoseError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(PoseError(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        let s = self.face_size;
        if !(s.width > 0.0 && s.height > 0.0 && s.width.is_finite() && s.height.is_finite()) {
            return Err(PoseError("face_size must be positive".into()));
        }
        Ok(())
    }
}

fn arc(out: &mut Vec<Point<f64>>, n: usize, f: impl Fn(f64) -> (f64, f64)) {
    for i in 0..n {
        let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        let (x, y) = f(t);
        out.push(Point::new(x, y));
    }
}

/// Points on an ellipse, starting at angle `start` and going clockwise on
/// screen (y grows downward).
fn ring(out: &mut Vec<Point<f64>>, n: usize, c: (f64, f64), r: (f64, f64), start: f64) {
    for i in 0..n {
        let a = start + 2.0 * PI * i as f64 / n as f64;
        out.push(Point::new(c.0 + r.0 * a.cos(), c.1 - r.1 * a.sin()));
    }
}

/// Frontal face in unit face-box coordinates.
fn frontal(eye_open: f64) -> Vec<Point<f64>> {
    let mut p = Vec::with_capacity(LANDMARK_COUNT);
    arc(&mut p, 17, |t| {
        let a = PI * (1.0 - t);
        (0.5 + 0.46 * a.cos(), 0.35 + 0.6 * a.sin())
    });
    arc(&mut p, 5, |t| (0.14 + 0.28 * t, 0.27 - 0.05 * (PI * t).sin()));
    arc(&mut p, 5, |t| (0.58 + 0.28 * t, 0.27 - 0.05 * (PI * t).sin()));
    arc(&mut p, 4, |t| (0.5, 0.36 + 0.2 * t));
    arc(&mut p, 5, |t| (0.41 + 0.18 * t, 0.6 + 0.03 * (PI * t).sin()));
    for cx in [0.3, 0.7] {
        // Corner, two upper lid points, corner, two lower lid points.
        for a in [PI, 2.0 * PI / 3.0, PI / 3.0, 0.0, -PI / 3.0, -2.0 * PI / 3.0] {
            p.push(Point::new(cx + 0.08 * a.cos(), 0.38 - 0.05 * eye_open * a.sin()));
        }
    }
    ring(&mut p, 12, (0.5, 0.78), (0.17, 0.07), PI);
    ring(&mut p, 8, (0.5, 0.78), (0.11, 0.025), PI);
    debug_assert_eq!(p.len(), LANDMARK_COUNT);
    p
}

/// Mean landmark positions of a pose, in unit face-box coordinates.
pub fn template(label: PoseLabel) -> Vec<Point<f64>> {
    match label {
        PoseLabel::FacingForward => frontal(1.0),
        PoseLabel::EyesClosed => {
            let mut p = frontal(0.05);
            for q in &mut p[17..27] {
                q.y += 0.02;
            }
            p
        }
        // Pitch: features slide down the box and the lower face shortens.
        PoseLabel::FacingDown => frontal(0.8)
            .into_iter()
            .map(|q| Point::new(q.x, 0.3 + 0.68 * q.y))
            .collect(),
        // Yaw: features crowd toward one side.
        PoseLabel::FacingSideways => frontal(1.0)
            .into_iter()
            .map(|q| Point::new(0.12 + 0.62 * q.x, q.y))
            .collect(),
    }
}

/// Turns unit coordinates into pixels inside the face box, with jitter.
fn place(unit: &[Point<f64>], params: &PoseParams, rng: &mut ChaCha8Rng) -> Vec<Point<f64>> {
    let jitter = Normal::new(0.0, params.sigma).expect("sigma validated");
    let (o, s) = (params.face_origin, params.face_size);
    unit.iter()
        .map(|q| {
            let x = o.x + q.x * s.width;
            let y = o.y + q.y * s.height;
            if params.sigma == 0.0 {
                Point::new(x, y)
            } else {
                Point::new(x + jitter.sample(rng), y + jitter.sample(rng))
            }
        })
        .collect()
}

pub struct FrameMeta<'a> {
    pub camera_id: &'a str,
    pub zone_id: &'a str,
    pub timestamp: Timestamp,
    pub frame_ref: String,
}

fn frame(points: Vec<Point<f64>>, params: &PoseParams, meta: FrameMeta<'_>) -> LandmarkFrame {
    LandmarkFrame {
        camera_id: meta.camera_id.to_owned(),
        zone_id: meta.zone_id.to_owned(),
        timestamp: meta.timestamp,
        points,
        face_origin: params.face_origin,
        face_size: params.face_size,
        frame_ref: meta.frame_ref,
    }
}

/// A jittered frame of the given pose.
pub fn pose_frame(label: PoseLabel, params: &PoseParams, rng: &mut ChaCha8Rng, meta: FrameMeta<'_>) -> LandmarkFrame {
    let points = place(&template(label), params, rng);
    frame(points, params, meta)
}

/// A frame unlike every pose: a template sheared and stretched so that
/// landmarks leave their usual places in the box.
pub fn anomalous_frame(
    base: PoseLabel,
    params: &PoseParams,
    rng: &mut ChaCha8Rng,
    meta: FrameMeta<'_>,
) -> LandmarkFrame {
    let warped: Vec<_> = template(base)
        .into_iter()
        .map(|q| Point::new(q.x + 0.45 * (q.y - 0.5), 0.5 + 1.4 * (q.y - 0.5) + 0.2 * (q.x - 0.5)))
        .collect();
    let points = place(&warped, params, rng);
    frame(points, params, meta)
}

/// Class-balanced labelled features: sample `i` has label `i mod 4`, so
/// class counts differ by at most one. Deterministic in `seed`.
pub fn generate_pose_dataset(params: &PoseParams, n: usize, seed: u64) -> Result<Vec<LabeledSample<f64>>, PoseError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let label = PoseLabel::ALL[i % PoseLabel::COUNT];
            let meta = FrameMeta {
                camera_id: "synthetic",
                zone_id: "synthetic",
                timestamp: i as Timestamp,
                frame_ref: format!("synthetic/{i}"),
            };
            let f = pose_frame(label, params, &mut rng, meta);
            LabeledSample {
                features: normalize(&f).expect("generated frames are valid"),
                label,
            }
        })
        .collect())
}

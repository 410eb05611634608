//! Landmark normalization and landmark-stream ingestion.

use std::collections::HashMap;
use std::io::BufRead;

use thiserror::Error;

use crate::codec::{self, DecodeError};
use crate::model::{FeatureVector, InvariantError, LandmarkFrame, Timestamp, FEATURE_DIM, LANDMARK_COUNT};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("normalization failed: {0}")]
pub struct NormalizeError(#[from] pub InvariantError);

/// Maps a frame onto face-relative coordinates.
///
/// Each landmark becomes `((x - origin.x) / width, (y - origin.y) / height)`,
/// so translating a frame together with its face box, or scaling both by the
/// same positive factor, leaves the output unchanged.
pub fn normalize<T: Scalar>(frame: &LandmarkFrame<T>) -> Result<FeatureVector<T>, NormalizeError> {
    frame.validate()?;
    let origin = frame.face_origin;
    let size = frame.face_size;
    let mut values = vec![T::zero(); FEATURE_DIM];
    let (xs, ys) = values.split_at_mut(LANDMARK_COUNT);
    for ((p, x), y) in frame.points.iter().zip(xs).zip(ys) {
        *x = (p.x - origin.x) / size.width;
        *y = (p.y - origin.y) / size.height;
    }
    // A finite input can still overflow, e.g. 1e308 / 1e-10.
    Ok(FeatureVector::new(values, frame.frame_ref.clone(), frame.timestamp)?)
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: DecodeError,
    },
    #[error("line {line}: camera {camera_id} timestamp {timestamp} precedes {previous}")]
    OutOfOrder {
        line: usize,
        camera_id: String,
        timestamp: Timestamp,
        previous: Timestamp,
    },
    #[error("line {line}: {source}")]
    Io {
        line: usize,
        #[source]
        source: std::io::Error,
    },
}

impl StreamError {
    pub fn line(&self) -> usize {
        match self {
            StreamError::Malformed { line, .. }
            | StreamError::OutOfOrder { line, .. }
            | StreamError::Io { line, .. } => *line,
        }
    }
}

/// Reads newline-delimited `LandmarkFrame` JSON.
///
/// Frames are yielded in input order. Blank lines are skipped. The first
/// error ends the stream; frames before it have already been yielded.
pub struct LandmarkReader<R, T: Scalar = f64> {
    lines: std::io::Lines<R>,
    line_no: usize,
    last_seen: HashMap<String, Timestamp>,
    done: bool,
    _scalar: std::marker::PhantomData<T>,
}

impl<R: BufRead, T: Scalar> LandmarkReader<R, T> {
    pub fn new(source: R) -> Self {
        Self {
            lines: source.lines(),
            line_no: 0,
            last_seen: HashMap::new(),
            done: false,
            _scalar: std::marker::PhantomData,
        }
    }

    fn next_frame(&mut self) -> Option<Result<LandmarkFrame<T>, StreamError>> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(line) => line,
                Err(source) => {
                    return Some(Err(StreamError::Io {
                        line: self.line_no,
                        source,
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let frame: LandmarkFrame<T> = match codec::decode_str(&line) {
                Ok(frame) => frame,
                Err(source) => {
                    return Some(Err(StreamError::Malformed {
                        line: self.line_no,
                        source,
                    }))
                }
            };
            if let Some(&previous) = self.last_seen.get(&frame.camera_id) {
                if frame.timestamp < previous {
                    return Some(Err(StreamError::OutOfOrder {
                        line: self.line_no,
                        camera_id: frame.camera_id,
                        timestamp: frame.timestamp,
                        previous,
                    }));
                }
            }
            self.last_seen.insert(frame.camera_id.clone(), frame.timestamp);
            return Some(Ok(frame));
        }
    }
}

impl<R: BufRead, T: Scalar> Iterator for LandmarkReader<R, T> {
    type Item = Result<LandmarkFrame<T>, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_frame();
        if matches!(item, None | Some(Err(_))) {
            self.done = true;
        }
        item
    }
}

pub fn read_landmark_stream<R: BufRead>(source: R) -> LandmarkReader<R, f64> {
    LandmarkReader::new(source)
}

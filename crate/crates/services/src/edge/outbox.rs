use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use shelfwatch_core::codec::{self, DecodeError};
use shelfwatch_core::SuspicionEvent;
use thiserror::Error;

pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

#[derive(Debug, Error)]
pub enum OutboxError {
    #[error("outbox line {line}: {source}")]
    Corrupt { line: usize, source: DecodeError },
    #[error("outbox: {0}")]
    Io(#[from] std::io::Error),
}

/// Bounded FIFO of events awaiting delivery, optionally mirrored to a
/// JSONL file so a restarted agent resumes where it stopped.
///
/// When full, the oldest event is dropped to make room and counted.
#[derive(Debug)]
pub struct Outbox {
    queue: VecDeque<SuspicionEvent>,
    capacity: usize,
    dropped: u64,
    path: Option<PathBuf>,
}

impl Outbox {
    pub fn in_memory(capacity: usize) -> Self {
        Self {
            queue: VecDeque::new(),
            capacity: capacity.max(1),
            dropped: 0,
            path: None,
        }
    }

    pub fn open(path: impl Into<PathBuf>, capacity: usize) -> Result<Self, OutboxError> {
        let path = path.into();
        let mut outbox = Self::in_memory(capacity);
        match File::open(&path) {
            Ok(file) => {
                for (i, line) in BufReader::new(file).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let event =
                        codec::decode_str(&line).map_err(|source| OutboxError::Corrupt { line: i + 1, source })?;
                    outbox.enqueue(event);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        outbox.path = Some(path);
        outbox.persist()?;
        Ok(outbox)
    }

    fn enqueue(&mut self, event: SuspicionEvent) -> Option<SuspicionEvent> {
        let evicted = if self.queue.len() >= self.capacity {
            self.dropped += 1;
            self.queue.pop_front()
        } else {
            None
        };
        self.queue.push_back(event);
        evicted
    }

    /// Appends an event; returns the event evicted to make room, if any.
    pub fn push(&mut self, event: SuspicionEvent) -> Result<Option<SuspicionEvent>, OutboxError> {
        let evicted = self.enqueue(event);
        if let Some(e) = &evicted {
            tracing::warn!(event_id = %e.event_id, "outbox full, dropped oldest event");
        }
        self.persist()?;
        Ok(evicted)
    }

    pub fn front(&self) -> Option<&SuspicionEvent> {
        self.queue.front()
    }

    pub fn pop_front(&mut self) -> Result<Option<SuspicionEvent>, OutboxError> {
        let event = self.queue.pop_front();
        if event.is_some() {
            self.persist()?;
        }
        Ok(event)
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Events evicted by overflow since this outbox was created.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn iter(&self) -> impl Iterator<Item = &SuspicionEvent> {
        self.queue.iter()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn persist(&self) -> Result<(), OutboxError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let tmp = path.with_extension("tmp");
        let mut file = std::io::BufWriter::new(File::create(&tmp)?);
        for event in &self.queue {
            file.write_all(&codec::encode(event))?;
            file.write_all(b"\n")?;
        }
        file.into_inner().map_err(|e| e.into_error())?.sync_data()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

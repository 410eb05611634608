use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use shelfwatch_core::features::{read_landmark_stream, StreamError};
use shelfwatch_core::LandmarkFrame;

use super::publish::{Backoff, BackoffConfig, PublishError, Publisher};
use super::{AgentConfig, AgentError, EdgeAgent, Outbox, SharedAgent};
use crate::control::ControlMessage;
use crate::http::client::{CloudClient, HttpControl, HttpPublisher};

/// Where an agent fetches configuration pushes when no live link exists.
pub trait ControlSource: Send {
    fn poll(&mut self, camera_id: &str) -> Result<Option<ControlMessage>, String>;
    fn ack(&mut self, camera_id: &str, version: u64) -> Result<(), String>;
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub replay_speed: f64,
    pub backoff: BackoffConfig,
    /// How long to keep retrying delivery after the stream ends.
    pub drain_timeout: Duration,
    pub poll_interval: Duration,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            replay_speed: 0.0,
            backoff: BackoffConfig::default(),
            drain_timeout: Duration::from_secs(10),
            poll_interval: Duration::from_secs(1),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: u64,
    /// Frames that failed validation or belonged to another camera.
    pub skipped_frames: u64,
    /// Ids of every event the detector emitted, in order.
    pub emitted: Vec<String>,
    pub delivered: u64,
    pub rejected: u64,
    /// Evicted by outbox overflow.
    pub dropped: u64,
    /// Still queued when the run ended.
    pub undelivered: usize,
    pub stream_error: Option<String>,
}

struct Shared {
    outbox: Mutex<Outbox>,
    wake: Condvar,
    done: AtomicBool,
}

impl Shared {
    fn outbox(&self) -> std::sync::MutexGuard<'_, Outbox> {
        self.outbox.lock().expect("outbox lock poisoned")
    }
}

/// Opens a landmark source: `-` for stdin, `tcp://host:port` to accept one
/// connection, anything else is a file path.
pub fn open_source(spec: &str) -> std::io::Result<Box<dyn BufRead + Send>> {
    if spec == "-" {
        return Ok(Box::new(BufReader::new(std::io::stdin())));
    }
    if let Some(addr) = spec.strip_prefix("tcp://") {
        let listener = TcpListener::bind(addr)?;
        tracing::info!(addr = %listener.local_addr()?, "waiting for landmark stream");
        let (stream, peer) = listener.accept()?;
        tracing::info!(%peer, "landmark stream connected");
        return Ok(Box::new(BufReader::new(stream)));
    }
    Ok(Box::new(BufReader::new(std::fs::File::open(spec)?)))
}

/// Runs an agent against the HTTP cloud service until the source ends.
pub fn run_agent(config: &AgentConfig, source: Box<dyn BufRead + Send>) -> Result<RunSummary, AgentError> {
    let agent = Arc::new(Mutex::new(EdgeAgent::new(config)?));
    let outbox = match &config.queue_path {
        Some(path) => Outbox::open(path, config.queue_capacity)?,
        None => Outbox::in_memory(config.queue_capacity),
    };
    let client = CloudClient::new(&config.endpoint, config.auth_token.clone());
    let options = RunOptions {
        replay_speed: config.replay_speed,
        backoff: config.backoff.clone(),
        poll_interval: Duration::from_millis(config.poll_interval_ms.max(1)),
        ..RunOptions::default()
    };
    run_stream(
        agent,
        outbox,
        HttpPublisher::new(client.clone()),
        Some(Box::new(HttpControl::new(client))),
        read_landmark_stream(source),
        &options,
    )
}

/// Drives `frames` through the agent. Detection and delivery run on
/// separate threads, so an unreachable cloud never stalls ingestion; events
/// wait in the outbox and are retried in order with backoff.
pub fn run_stream<P, I>(
    agent: SharedAgent,
    outbox: Outbox,
    publisher: P,
    control: Option<Box<dyn ControlSource>>,
    frames: I,
    options: &RunOptions,
) -> Result<RunSummary, AgentError>
where
    P: Publisher + 'static,
    I: IntoIterator<Item = Result<LandmarkFrame, StreamError>>,
{
    let shared = Arc::new(Shared {
        outbox: Mutex::new(outbox),
        wake: Condvar::new(),
        done: AtomicBool::new(false),
    });
    let sender = {
        let shared = shared.clone();
        let backoff = options.backoff.clone();
        let drain = options.drain_timeout;
        thread::spawn(move || deliver_loop(&shared, publisher, backoff, drain))
    };
    let poller = control.map(|source| {
        let shared = shared.clone();
        let agent = agent.clone();
        let interval = options.poll_interval;
        thread::spawn(move || poll_loop(&shared, &agent, source, interval))
    });

    let mut summary = RunSummary::default();
    let started = Instant::now();
    let mut first_ts = None;
    let result = (|| -> Result<(), AgentError> {
        for frame in frames {
            let frame = match frame {
                Ok(frame) => frame,
                Err(e) => {
                    tracing::error!(error = %e, "landmark stream ended with an error");
                    summary.stream_error = Some(e.to_string());
                    break;
                }
            };
            if options.replay_speed > 0.0 {
                let t0 = *first_ts.get_or_insert(frame.timestamp);
                let offset_ms = (frame.timestamp - t0).max(0) as f64 / options.replay_speed;
                let due = Duration::from_secs_f64(offset_ms / 1000.0);
                if let Some(wait) = due.checked_sub(started.elapsed()) {
                    thread::sleep(wait);
                }
            }
            let outcome = agent.lock().expect("agent lock poisoned").process_frame(&frame);
            summary.frames += 1;
            match outcome {
                Ok(Some(event)) => {
                    summary.emitted.push(event.event_id.clone());
                    shared.outbox().push(event)?;
                    shared.wake.notify_all();
                }
                Ok(None) => {}
                Err(e) => {
                    summary.skipped_frames += 1;
                    tracing::warn!(frame_ref = %frame.frame_ref, error = %e, "skipping frame");
                }
            }
        }
        Ok(())
    })();

    shared.done.store(true, Ordering::SeqCst);
    shared.wake.notify_all();
    let (delivered, rejected) = sender.join().expect("delivery thread panicked");
    if let Some(poller) = poller {
        poller.join().expect("control thread panicked");
    }
    result?;
    let outbox = shared.outbox();
    summary.delivered = delivered;
    summary.rejected = rejected;
    summary.dropped = outbox.dropped();
    summary.undelivered = outbox.len();
    Ok(summary)
}

fn deliver_loop<P: Publisher>(
    shared: &Shared,
    mut publisher: P,
    backoff: BackoffConfig,
    drain: Duration,
) -> (u64, u64) {
    let mut backoff = Backoff::new(backoff);
    let mut delivered = 0;
    let mut rejected = 0;
    let mut deadline: Option<Instant> = None;
    loop {
        let next = {
            let mut outbox = shared.outbox();
            loop {
                if let Some(event) = outbox.front() {
                    break Some(event.clone());
                }
                if shared.done.load(Ordering::SeqCst) {
                    break None;
                }
                outbox = shared.wake.wait(outbox).expect("outbox lock poisoned");
            }
        };
        let Some(event) = next else { break };
        let result = publisher.publish(&event);
        let settled = match &result {
            Ok(()) => {
                delivered += 1;
                backoff.reset();
                true
            }
            Err(PublishError::Rejected(reason)) => {
                rejected += 1;
                tracing::warn!(event_id = %event.event_id, %reason, "cloud rejected event; dropping");
                true
            }
            Err(PublishError::Unavailable(_)) => false,
        };
        if settled {
            let mut outbox = shared.outbox();
            // Overflow may have evicted it while it was in flight.
            if outbox.front().is_some_and(|e| e.event_id == event.event_id) {
                if let Err(e) = outbox.pop_front() {
                    tracing::error!(error = %e, "failed to persist outbox");
                }
            }
            continue;
        }
        let mut delay = backoff.next_delay();
        if shared.done.load(Ordering::SeqCst) {
            let end = *deadline.get_or_insert_with(|| Instant::now() + drain);
            let left = end.saturating_duration_since(Instant::now());
            if left.is_zero() {
                tracing::warn!(
                    queued = shared.outbox().len(),
                    "giving up delivery; events stay in the outbox"
                );
                break;
            }
            delay = delay.min(left);
        }
        if let Err(PublishError::Unavailable(reason)) = result {
            tracing::debug!(%reason, ?delay, "delivery failed, backing off");
        }
        thread::sleep(delay);
    }
    (delivered, rejected)
}

fn poll_loop(shared: &Shared, agent: &SharedAgent, mut source: Box<dyn ControlSource>, interval: Duration) {
    let camera_id = agent.lock().expect("agent lock poisoned").camera_id().to_owned();
    let tick = interval.min(Duration::from_millis(50));
    let mut since_poll = interval;
    while !shared.done.load(Ordering::SeqCst) {
        if since_poll >= interval {
            since_poll = Duration::ZERO;
            match source.poll(&camera_id) {
                Ok(Some(message)) => {
                    let ack = agent.lock().expect("agent lock poisoned").handle_control(&message);
                    match ack {
                        Ok(ack) => {
                            if let Err(e) = source.ack(&camera_id, ack.version) {
                                tracing::warn!(error = %e, "control ack failed");
                            }
                        }
                        Err(e) => tracing::warn!(error = %e, "control message rejected"),
                    }
                }
                Ok(None) => {}
                Err(e) => tracing::debug!(error = %e, "control poll failed"),
            }
        }
        thread::sleep(tick);
        since_poll += tick;
    }
}

//! axum router over a [`CloudService`] and its [`Inventory`].

use std::convert::Infallible;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use shelfwatch_core::clock::Clock;
use shelfwatch_core::inventory::{Inventory, InventoryError};
use shelfwatch_core::{codec, SaleTransaction, ShelfObservation, StaffFeedback, SuspicionEvent};
use tokio::sync::watch;

use super::{suspicion_topic, ErrorBody, TOPIC_HEADER};
use crate::cloud::{CloudError, CloudService, Disposition};
use crate::control::{ControlReceipt, ThresholdRequest};

#[derive(Clone)]
pub struct AppState {
    pub cloud: Arc<CloudService>,
    pub inventory: Arc<Inventory>,
    pub clock: Arc<dyn Clock>,
    /// When set, every route except `/healthz` needs `Authorization: Bearer`.
    pub token: Option<String>,
    shutdown: watch::Receiver<bool>,
}

impl AppState {
    pub fn new(
        cloud: Arc<CloudService>,
        inventory: Arc<Inventory>,
        clock: Arc<dyn Clock>,
        token: Option<String>,
    ) -> Self {
        Self {
            cloud,
            inventory,
            clock,
            token,
            shutdown: watch::channel(false).1,
        }
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<CloudError> for ApiError {
    fn from(e: CloudError) -> Self {
        let status = match &e {
            CloudError::UnknownAlert(_) | CloudError::UnknownCamera(_) => StatusCode::NOT_FOUND,
            CloudError::Conflict { .. } => StatusCode::CONFLICT,
            CloudError::InvalidThreshold(_) | CloudError::InvalidEvent(_) => StatusCode::UNPROCESSABLE_ENTITY,
            CloudError::Corrupt { .. } | CloudError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<InventoryError> for ApiError {
    fn from(e: InventoryError) -> Self {
        let status = match &e {
            InventoryError::UnknownProduct(_) | InventoryError::UnknownZone(_) => StatusCode::NOT_FOUND,
            InventoryError::UnknownPairing { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            InventoryError::Oversell { .. } => StatusCode::CONFLICT,
            InventoryError::NoObservation(_) | InventoryError::Stale { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn decode_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    codec::decode(body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/events", post(post_event))
        .route("/alerts", get(get_alerts))
        .route("/alerts/stream", get(stream_alerts))
        .route("/alerts/{alert_id}", get(get_alert))
        .route("/feedback", post(post_feedback))
        .route("/control/threshold", post(post_threshold))
        .route("/control/{camera_id}", get(get_control))
        .route("/control/{camera_id}/ack", post(post_ack))
        .route("/zones/{zone_id}/status", get(get_zone_status))
        .route("/inventory/sales", post(post_sale))
        .route("/inventory/observations", post(post_observation))
        .route("/inventory/products/{product_id}", get(get_product))
        .route("/inventory/products/{product_id}/reconcile", get(get_reconcile))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = request
            .headers()
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into()).into_response();
        }
    }
    next.run(request).await
}

async fn post_event(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let event: SuspicionEvent = decode_body(&body)?;
    if let Some(topic) = headers.get(TOPIC_HEADER) {
        let expected = suspicion_topic(&event.camera_id);
        if topic.as_bytes() != expected.as_bytes() {
            return Err(ApiError(
                StatusCode::BAD_REQUEST,
                format!("topic {topic:?} does not match {expected}"),
            ));
        }
    }
    let cloud = state.cloud.clone();
    let disposition = tokio::task::spawn_blocking(move || cloud.on_suspicion(&event))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let status = match disposition {
        Disposition::Parked => StatusCode::ACCEPTED,
        _ => StatusCode::OK,
    };
    Ok((status, Json(disposition)).into_response())
}

#[derive(Deserialize)]
struct Since {
    #[serde(default)]
    since: usize,
}

async fn get_alerts(State(state): State<AppState>, Query(q): Query<Since>) -> impl IntoResponse {
    Json(state.cloud.alerts_since(q.since))
}

async fn get_alert(State(state): State<AppState>, Path(alert_id): Path<String>) -> ApiResult<impl IntoResponse> {
    state
        .cloud
        .alert(&alert_id)
        .map(Json)
        .ok_or_else(|| CloudError::UnknownAlert(alert_id).into())
}

/// Backlog from `since`, then live alerts. Ends when the server shuts down.
async fn stream_alerts(
    State(state): State<AppState>,
    Query(q): Query<Since>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let (backlog, rx) = state.cloud.subscribe(q.since);
    let live = futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|a| (a, rx)) });
    let mut shutdown = state.shutdown.clone();
    let stop = async move {
        let _ = shutdown.wait_for(|stop| *stop).await;
    };
    let frames = futures::stream::iter(backlog)
        .chain(live)
        .map(|alert| {
            let event = Event::default()
                .event("alert")
                .id(alert.alert_id.clone())
                .json_data(&alert)
                .expect("alerts serialize");
            Ok(event)
        })
        .take_until(stop);
    Sse::new(frames).keep_alive(KeepAlive::default())
}

async fn post_feedback(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let feedback: StaffFeedback = decode_body(&body)?;
    Ok(Json(state.cloud.record_feedback(&feedback)?))
}

async fn post_threshold(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let request: ThresholdRequest = decode_body(&body)?;
    let cloud = state.cloud.clone();
    let ack = tokio::task::spawn_blocking(move || cloud.set_threshold(&request.camera_id, request.threshold))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(ack))
}

async fn get_control(State(state): State<AppState>, Path(camera_id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(state.cloud.poll_control(&camera_id)?))
}

async fn post_ack(
    State(state): State<AppState>,
    Path(camera_id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let receipt: ControlReceipt = decode_body(&body)?;
    Ok(Json(state.cloud.acknowledge(&camera_id, receipt.version)?))
}

async fn get_zone_status(State(state): State<AppState>, Path(zone_id): Path<String>) -> ApiResult<impl IntoResponse> {
    state.inventory.products_in_zone(&zone_id)?;
    Ok(Json(state.cloud.zone_status(&zone_id)))
}

async fn post_sale(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let tx: SaleTransaction = decode_body(&body)?;
    Ok(Json(state.inventory.apply_sale(&tx)?))
}

async fn post_observation(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let obs: ShelfObservation = decode_body(&body)?;
    state.inventory.record_observation(&obs)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_product(State(state): State<AppState>, Path(product_id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(state.inventory.get_product(&product_id)?))
}

async fn get_reconcile(State(state): State<AppState>, Path(product_id): Path<String>) -> ApiResult<impl IntoResponse> {
    let now = state.clock.now_ms();
    Ok(Json(state.inventory.reconcile(&product_id, now)?))
}

/// Serves until `shutdown` resolves. Parked events are retried in the
/// background while the server runs.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let (stop_tx, stop_rx) = watch::channel(false);
    let state = AppState {
        shutdown: stop_rx.clone(),
        ..state
    };
    let retry = tokio::spawn(retry_parked(state.cloud.clone(), stop_rx));
    let app = router(state);
    let result = axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            shutdown.await;
            let _ = stop_tx.send(true);
        })
        .await;
    retry.abort();
    result
}

async fn retry_parked(cloud: Arc<CloudService>, mut stop: watch::Receiver<bool>) {
    let mut tick = tokio::time::interval(Duration::from_millis(500));
    loop {
        tokio::select! {
            _ = tick.tick() => {}
            _ = stop.wait_for(|s| *s) => return,
        }
        if cloud.parked_count() == 0 {
            continue;
        }
        let cloud = cloud.clone();
        match tokio::task::spawn_blocking(move || cloud.retry_parked()).await {
            Ok(Ok(done)) if !done.is_empty() => tracing::info!(count = done.len(), "processed parked events"),
            Ok(Err(e)) => tracing::error!(error = %e, "retrying parked events failed"),
            _ => {}
        }
    }
}

/// A server on its own thread and runtime, for blocking callers such as
/// tests and the simulator.
pub struct ServerThread {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerThread {
    pub fn start(addr: SocketAddr, state: AppState) -> std::io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(serve(listener, state, async {
                let _ = stopped.await;
            }))
        });
        Ok(Self {
            addr,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting, closes push streams and waits for the server.
    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(thread) => thread.join().expect("server thread panicked"),
            None => Ok(()),
        }
    }
}

impl Drop for ServerThread {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

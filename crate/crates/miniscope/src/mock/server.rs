//! HTTP front end for the mock super-app backend. All business decisions
//! live in [`super::decide`]; this layer only parses requests, forwards them
//! to the decision core and exposes a small admin surface:
//!
//! - `GET  /__admin/records`  request log as JSON
//! - `POST /__admin/reset`    clear tokens, counters and the log
//! - `POST /__admin/advance`  move the virtual clock forward (`{"seconds": n}`)
//!
//! The client IP used for whitelist checks is the peer address, overridable
//! per request with the `x-mock-client-ip` header so tests can simulate
//! probing from different hosts.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{ConnectInfo, Query, State};
use axum::http::HeaderMap;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::oneshot;

use super::decide::{evaluate_request, MockRequest, MockState};
use super::scenario::{MockScenario, ScenarioError};
use crate::catalog::ApiCatalog;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("failed to bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("failed to start async runtime: {0}")]
    Runtime(std::io::Error),
}

#[derive(Clone)]
struct AppState {
    mock: Arc<Mutex<MockState>>,
    catalog: Arc<ApiCatalog>,
}

/// Handle to a running mock server. Dropping it shuts the server down.
pub struct MockServerHandle {
    pub addr: SocketAddr,
    state: Arc<Mutex<MockState>>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockServerHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Direct access to the server state, so in-process tests can assert on
    /// the request log without going through HTTP.
    pub fn state(&self) -> Arc<Mutex<MockState>> {
        Arc::clone(&self.state)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Starts the mock server on `addr` (use port 0 for an ephemeral port) and
/// returns once it accepts connections.
pub fn serve(
    scenario: MockScenario,
    catalog: ApiCatalog,
    addr: SocketAddr,
) -> Result<MockServerHandle, ServeError> {
    scenario.validate()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(ServeError::Runtime)?;

    let listener = runtime
        .block_on(tokio::net::TcpListener::bind(addr))
        .map_err(|source| ServeError::Bind { addr, source })?;
    let local_addr = listener
        .local_addr()
        .map_err(|source| ServeError::Bind { addr, source })?;

    let state = Arc::new(Mutex::new(MockState::new(scenario)));
    let app_state = AppState {
        mock: Arc::clone(&state),
        catalog: Arc::new(catalog),
    };

    let router = Router::new()
        .route("/__admin/records", get(admin_records))
        .route("/__admin/reset", post(admin_reset))
        .route("/__admin/advance", post(admin_advance))
        .fallback(handle_api)
        .with_state(app_state);

    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let server = axum::serve(
                listener,
                router.into_make_service_with_connect_info::<SocketAddr>(),
            )
            .with_graceful_shutdown(async {
                let _ = rx.await;
            });
            let _ = server.await;
        });
    });

    Ok(MockServerHandle {
        addr: local_addr,
        state,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

async fn handle_api(
    State(st): State<AppState>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    Query(query): Query<BTreeMap<String, String>>,
    headers: HeaderMap,
    uri: axum::http::Uri,
    body: String,
) -> impl IntoResponse {
    let mut params = query;
    // Top-level string/number fields of a JSON object body count as
    // parameters too, matching how the real endpoints take their input.
    if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&body) {
        for (k, v) in map {
            let s = match v {
                Value::String(s) => s,
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                _ => continue,
            };
            params.entry(k).or_insert(s);
        }
    }
    let client_ip = headers
        .get("x-mock-client-ip")
        .and_then(|v| v.to_str().ok())
        .map(|s| s.to_string())
        .unwrap_or_else(|| peer.ip().to_string());

    let req = MockRequest {
        path: uri.path().to_string(),
        params,
        client_ip,
    };
    let reply = {
        let mut mock = st.mock.lock().unwrap();
        evaluate_request(&mut mock, &st.catalog, &req)
    };
    Json(reply)
}

async fn admin_records(State(st): State<AppState>) -> impl IntoResponse {
    let mock = st.mock.lock().unwrap();
    Json(json!({"records": mock.records()}))
}

async fn admin_reset(State(st): State<AppState>) -> impl IntoResponse {
    let mut mock = st.mock.lock().unwrap();
    mock.reset();
    Json(json!({"errcode": 0, "errmsg": "ok"}))
}

async fn admin_advance(State(st): State<AppState>, body: String) -> impl IntoResponse {
    let seconds = serde_json::from_str::<Value>(&body)
        .ok()
        .and_then(|v| v.get("seconds").and_then(Value::as_u64))
        .unwrap_or(0);
    let mut mock = st.mock.lock().unwrap();
    mock.clock_offset += seconds;
    Json(json!({"errcode": 0, "clock_offset": mock.clock_offset}))
}

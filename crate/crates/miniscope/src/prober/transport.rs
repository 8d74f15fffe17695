//! Transport abstraction for the prober. Probe logic is written against the
//! [`Transport`] trait so tests can run without sockets and `--no-probe`
//! runs can assert that zero calls were attempted.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

use crate::catalog::ApiCatalog;
use crate::mock::{evaluate_request, MockRequest, MockState};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("request to {path} failed: {reason}")]
    Request { path: String, reason: String },
    #[error("response from {path} was not JSON: {reason}")]
    BadBody { path: String, reason: String },
    #[error("probing is disabled")]
    ProbingDisabled,
}

pub trait Transport: Send + Sync {
    /// Issues one call against `path` with the given query parameters and
    /// returns the parsed JSON body.
    fn call(&self, path: &str, params: &BTreeMap<String, String>)
        -> Result<Value, TransportError>;
}

/// Real HTTP transport against a base URL such as `http://127.0.0.1:3923`.
pub struct HttpTransport {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .map_err(|e| TransportError::Request {
                path: base_url.to_string(),
                reason: e.to_string(),
            })?;
        Ok(HttpTransport {
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
        })
    }
}

impl Transport for HttpTransport {
    fn call(
        &self,
        path: &str,
        params: &BTreeMap<String, String>,
    ) -> Result<Value, TransportError> {
        let url = format!("{}{}", self.base_url, path);
        let resp = self
            .client
            .get(&url)
            .query(&params.iter().collect::<Vec<_>>())
            .send()
            .map_err(|e| TransportError::Request {
                path: path.to_string(),
                reason: e.to_string(),
            })?;
        resp.json().map_err(|e| TransportError::BadBody {
            path: path.to_string(),
            reason: e.to_string(),
        })
    }
}

/// In-process transport that feeds requests straight into a mock server
/// state without a socket. Used by tests and by the fast corpus pipeline.
pub struct InProcessTransport {
    state: Arc<Mutex<MockState>>,
    catalog: Arc<ApiCatalog>,
    pub client_ip: String,
}

impl InProcessTransport {
    pub fn new(state: Arc<Mutex<MockState>>, catalog: Arc<ApiCatalog>) -> Self {
        InProcessTransport {
            state,
            catalog,
            client_ip: "127.0.0.1".to_string(),
        }
    }
}

impl Transport for InProcessTransport {
    fn call(
        &self,
        path: &str,
        params: &BTreeMap<String, String>,
    ) -> Result<Value, TransportError> {
        let req = MockRequest {
            path: path.to_string(),
            params: params.clone(),
            client_ip: self.client_ip.clone(),
        };
        let mut state = self.state.lock().unwrap();
        Ok(evaluate_request(&mut state, &self.catalog, &req))
    }
}

/// Transport that refuses every call and counts how many were attempted.
/// `--no-probe` runs are wired to this so tests can assert the count stays
/// at zero.
#[derive(Default)]
pub struct DisabledTransport {
    attempts: AtomicU64,
}

impl DisabledTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl Transport for DisabledTransport {
    fn call(&self, _: &str, _: &BTreeMap<String, String>) -> Result<Value, TransportError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Err(TransportError::ProbingDisabled)
    }
}

/// Wrapper that counts calls going through an inner transport.
pub struct CountingTransport<T: Transport> {
    inner: T,
    calls: AtomicU64,
}

impl<T: Transport> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        CountingTransport {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<T: Transport> Transport for CountingTransport<T> {
    fn call(
        &self,
        path: &str,
        params: &BTreeMap<String, String>,
    ) -> Result<Value, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.call(path, params)
    }
}

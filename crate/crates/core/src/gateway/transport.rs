//! HTTP transport boundary for remote providers.
//!
//! Remote providers and embedders only reach the network through
//! [`InstrumentedTransport`], which counts every request in a
//! process-wide counter. Offline runs can assert the counter stays zero.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

static NETWORK_OPERATIONS: AtomicU64 = AtomicU64::new(0);

/// Requests issued through any instrumented transport in this process.
pub fn network_operations() -> u64 {
    NETWORK_OPERATIONS.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
    pub retry_after_secs: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Io(String),
}

pub trait Transport: Send + Sync {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        (**self).post(request)
    }
}

/// Counts requests locally and in the process-wide counter.
pub struct InstrumentedTransport {
    inner: Arc<dyn Transport>,
    count: AtomicU64,
}

impl InstrumentedTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        Self {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn operations(&self) -> u64 {
        self.count.load(Ordering::SeqCst)
    }
}

impl Transport for InstrumentedTransport {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        NETWORK_OPERATIONS.fetch_add(1, Ordering::SeqCst);
        log::debug!("POST {}", request.url);
        self.inner.post(request)
    }
}

#[cfg(feature = "http")]
pub use http::HttpTransport;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use super::*;

    /// Blocking HTTP client.
    pub struct HttpTransport {
        agent: ureq::Agent,
    }

    impl HttpTransport {
        pub fn new(timeout: Duration) -> Self {
            let config = ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .http_status_as_error(false)
                .build();
            Self { agent: config.into() }
        }
    }

    impl Transport for HttpTransport {
        fn post(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
            let mut req = self.agent.post(&request.url);
            for (k, v) in &request.headers {
                req = req.header(k, v);
            }
            let mut resp = req.send(request.body.as_str()).map_err(|e| match e {
                ureq::Error::Timeout(_) => TransportError::Timeout,
                other => TransportError::Io(other.to_string()),
            })?;
            let status = resp.status().as_u16();
            let retry_after_secs = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse().ok());
            let body = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| TransportError::Io(e.to_string()))?;
            Ok(HttpResponse {
                status,
                body,
                retry_after_secs,
            })
        }
    }
}

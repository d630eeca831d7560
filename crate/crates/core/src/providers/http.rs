//! HTTP transport for providers speaking the wire protocol.

use std::time::Duration;

use serde_json::Value;

use super::wire::ErrorBody;
use super::{input_hash, Endpoint, ProviderError, Transport};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_RETRIES: u32 = 2;
pub const DEFAULT_BACKOFF: Duration = Duration::from_secs(1);
const BODY_LIMIT: u64 = 512 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderEndpoint {
    pub base_url: String,
    pub timeout: Duration,
    pub retries: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff: Duration,
    pub api_key: Option<String>,
}

impl ProviderEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout: DEFAULT_TIMEOUT,
            retries: DEFAULT_RETRIES,
            backoff: DEFAULT_BACKOFF,
            api_key: None,
        }
    }
}

pub struct HttpTransport {
    endpoint: ProviderEndpoint,
    agent: ureq::Agent,
}

enum Attempt {
    Done(Result<Value, ProviderError>),
    Retry(ProviderError),
}

impl HttpTransport {
    pub fn new(endpoint: ProviderEndpoint) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(endpoint.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { endpoint, agent }
    }

    fn url(&self, op: Endpoint) -> String {
        format!("{}{}", self.endpoint.base_url.trim_end_matches('/'), op.path())
    }

    fn attempt(&self, op: Endpoint, body: &Value, hash: &str, n: u32) -> Attempt {
        let url = self.url(op);
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.endpoint.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => {
                return Attempt::Retry(ProviderError::Timeout {
                    op: op.name().into(),
                    input_hash: hash.into(),
                    attempts: n,
                })
            }
            Err(e @ (ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound)) => {
                return Attempt::Retry(ProviderError::Unreachable {
                    op: op.name().into(),
                    input_hash: hash.into(),
                    url,
                    message: e.to_string(),
                })
            }
            Err(e) => return Attempt::Done(Err(ProviderError::protocol(op, e))),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().with_config().limit(BODY_LIMIT).read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => {
                return Attempt::Retry(ProviderError::Timeout {
                    op: op.name().into(),
                    input_hash: hash.into(),
                    attempts: n,
                })
            }
            Err(e) => return Attempt::Done(Err(ProviderError::protocol(op, e))),
        };
        Attempt::Done(match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| ProviderError::protocol(op, e)),
            400..=499 => {
                let (error, detail) = match serde_json::from_str::<ErrorBody>(&text) {
                    Ok(b) => (b.error, b.detail),
                    Err(_) => ("unknown".into(), text),
                };
                Err(ProviderError::Rejected {
                    op: op.name().into(),
                    input_hash: hash.into(),
                    status,
                    error,
                    detail,
                })
            }
            _ => Err(ProviderError::Server {
                op: op.name().into(),
                input_hash: hash.into(),
                status,
                message: text,
            }),
        })
    }
}

impl Transport for HttpTransport {
    /// Retries only transport failures and timeouts.
    fn call(&self, op: Endpoint, body: &Value) -> Result<Value, ProviderError> {
        let hash = input_hash(op, body);
        let mut delay = self.endpoint.backoff;
        let mut n = 1;
        loop {
            match self.attempt(op, body, &hash, n) {
                Attempt::Done(r) => return r,
                Attempt::Retry(e) if n > self.endpoint.retries => return Err(e),
                Attempt::Retry(e) => {
                    tracing::warn!(op = op.name(), attempt = n, error = %e, "retrying provider call");
                    std::thread::sleep(delay);
                    delay *= 2;
                    n += 1;
                }
            }
        }
    }

    fn describe_backend(&self) -> String {
        format!("http {}", self.endpoint.base_url)
    }
}

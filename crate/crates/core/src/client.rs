//! Blocking HTTP client for the relay API with bounded retry.

use std::thread::sleep;
use std::time::Duration;

use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::audit::Transcript;
use crate::protocol::Message;
use crate::relay::{BoardStatus, Created, ErrorBody, Page, Receipt};
use crate::specfile::SessionSetup;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("relay unreachable after {attempts} attempts: {last}")]
    Network { attempts: u32, last: String },
    #[error("relay answered {status}: {message}")]
    Api { status: u16, message: String },
    #[error("unexpected relay response: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn is_network(&self) -> bool {
        matches!(self, ClientError::Network { .. })
    }
}

/// Exponential backoff between attempts, doubling from `initial` up to `max`.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial: Duration,
    pub max: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 6, initial: Duration::from_millis(100), max: Duration::from_secs(2) }
    }
}

enum Failure {
    Retry(String),
    Fatal(ClientError),
}

pub struct RelayClient {
    base: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl RelayClient {
    pub fn new(base: &str, retry: RetryPolicy) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(10)))
            .build();
        Self { base: base.trim_end_matches('/').to_string(), agent: config.into(), retry }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn attempt<T: DeserializeOwned>(
        &self,
        call: impl Fn() -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<T, Failure> {
        let mut resp = call().map_err(|e| Failure::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(Failure::Retry(format!("status {status}")));
        }
        if status >= 400 {
            let message = resp
                .body_mut()
                .read_json::<ErrorBody>()
                .map(|b| b.error)
                .unwrap_or_else(|e| e.to_string());
            return Err(Failure::Fatal(ClientError::Api { status, message }));
        }
        resp.body_mut()
            .with_config()
            .limit(64 << 20)
            .read_json()
            .map_err(|e| Failure::Fatal(ClientError::Decode(e.to_string())))
    }

    fn with_retry<T: DeserializeOwned>(
        &self,
        call: impl Fn() -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<T, ClientError> {
        let mut delay = self.retry.initial;
        let mut last = String::new();
        for n in 0..self.retry.attempts.max(1) {
            if n > 0 {
                sleep(delay);
                delay = (delay * 2).min(self.retry.max);
            }
            match self.attempt(&call) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(e)) => last = e,
            }
        }
        Err(ClientError::Network { attempts: self.retry.attempts.max(1), last })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub fn create_session(&self, setup: &SessionSetup) -> Result<String, ClientError> {
        let url = self.url("/sessions");
        let created: Created = self.with_retry(|| self.agent.post(&url).send_json(setup))?;
        Ok(created.session_id)
    }

    pub fn post_message(&self, id: &str, msg: &Message) -> Result<Receipt, ClientError> {
        let url = self.url(&format!("/sessions/{id}/messages"));
        self.with_retry(|| self.agent.post(&url).send_json(msg))
    }

    pub fn fetch_log(&self, id: &str, from: u64) -> Result<Page, ClientError> {
        let url = self.url(&format!("/sessions/{id}/messages?from={from}"));
        self.with_retry(|| self.agent.get(&url).call())
    }

    pub fn transcript(&self, id: &str) -> Result<Transcript, ClientError> {
        let url = self.url(&format!("/sessions/{id}/transcript"));
        self.with_retry(|| self.agent.get(&url).call())
    }

    pub fn status(&self, id: &str) -> Result<BoardStatus, ClientError> {
        let url = self.url(&format!("/sessions/{id}/status"));
        self.with_retry(|| self.agent.get(&url).call())
    }
}

//! Minimal blocking JSON-over-HTTP client shared by the remote backends.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    /// Connection failure, timeout or non-success status.
    #[error("backend unavailable at {endpoint}: {reason}")]
    Unavailable { endpoint: String, reason: String },
    /// The service answered but the body did not match the wire contract.
    #[error("malformed response from {endpoint}: {reason}")]
    Protocol { endpoint: String, reason: String },
}

#[derive(Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    endpoint: String,
    bearer: Option<String>,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient")
            .field("endpoint", &self.endpoint)
            .field("bearer", &self.bearer.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl JsonClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent, endpoint: endpoint.into(), bearer: None }
    }

    pub fn with_bearer(mut self, token: Option<String>) -> Self {
        self.bearer = token;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, HttpError> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(token) = &self.bearer {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| HttpError::Unavailable {
            endpoint: self.endpoint.clone(),
            reason: e.to_string(),
        })?;
        response.body_mut().read_json::<Resp>().map_err(|e| HttpError::Protocol {
            endpoint: self.endpoint.clone(),
            reason: e.to_string(),
        })
    }
}

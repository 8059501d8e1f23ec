//! Minimal blocking JSON-over-HTTP client shared by the gateway, the
//! retrieval endpoints and deployment.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HttpError {
    #[error("endpoint {url} returned HTTP {status}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("endpoint {url} unreachable: {message}")]
    Transport { url: String, message: String },
    #[error("endpoint {url} returned an unexpected body: {message}")]
    Decode { url: String, message: String },
}

impl HttpError {
    pub fn status(&self) -> Option<u16> {
        match self {
            HttpError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// POSTs `body` as JSON and decodes a JSON response; non-2xx is an error.
pub(crate) fn post_json<B: Serialize, R: DeserializeOwned>(
    url: &str,
    bearer: Option<&str>,
    body: &B,
    timeout: Duration,
) -> Result<R, HttpError> {
    let mut request = agent(timeout).post(url);
    if let Some(token) = bearer {
        request = request.header("Authorization", &format!("Bearer {token}"));
    }
    let transport = |e: ureq::Error| HttpError::Transport { url: url.to_owned(), message: e.to_string() };
    let mut response = request.send_json(body).map_err(transport)?;
    let status = response.status().as_u16();
    let text = response.body_mut().read_to_string().map_err(transport)?;
    if !(200..300).contains(&status) {
        return Err(HttpError::Status { url: url.to_owned(), status, body: text });
    }
    serde_json::from_str(&text).map_err(|e| HttpError::Decode { url: url.to_owned(), message: e.to_string() })
}

/// POSTs raw bytes and returns the response body.
pub(crate) fn post_bytes(url: &str, bytes: &[u8], timeout: Duration) -> Result<String, HttpError> {
    let transport = |e: ureq::Error| HttpError::Transport { url: url.to_owned(), message: e.to_string() };
    let mut response = agent(timeout)
        .post(url)
        .header("Content-Type", "application/octet-stream")
        .send(bytes)
        .map_err(transport)?;
    let status = response.status().as_u16();
    let text = response.body_mut().read_to_string().map_err(transport)?;
    if !(200..300).contains(&status) {
        return Err(HttpError::Status { url: url.to_owned(), status, body: text });
    }
    Ok(text)
}

//! HTTP client for an external captioner + prompt-match classifier.
//!
//! Wire protocol: `POST {base_url}{path}` with
//! `{"prompt": ..., "image_ref": ...}` or `{"prompt": ..., "image": <base64>}`,
//! answered by `200 {"caption": ..., "match": bool, "score": number|null}`.
//! The endpoint alone decides `match`; scores are passed through untouched.

use std::fmt;
use std::time::Duration;

use base64::Engine as _;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::{CaptionRecord, FailedRecord};

pub const ENDPOINT_ENV: &str = "BIASLENS_ENDPOINT";
pub const TOKEN_ENV: &str = "BIASLENS_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndpointError {
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
    #[error("request timed out")]
    Timeout,
    #[error("network error: {0}")]
    Network(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("invalid endpoint response: {0}")]
    InvalidResponse(String),
}

impl EndpointError {
    pub fn is_retriable(&self) -> bool {
        match self {
            EndpointError::Timeout | EndpointError::Network(_) => true,
            EndpointError::Status { status, .. } => *status >= 500 || *status == 408 || *status == 429,
            EndpointError::Config(_) | EndpointError::InvalidResponse(_) => false,
        }
    }
}

fn default_path() -> String {
    "/caption".into()
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    200
}
fn default_auth_header() -> String {
    "Authorization".into()
}
fn default_concurrency() -> usize {
    4
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceEndpoint {
    pub base_url: String,
    #[serde(default = "default_path")]
    pub path: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// First retry delay; doubled on every further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    /// Never written to disk or echoed back by the API.
    #[serde(default, skip_serializing)]
    pub auth_token: Option<String>,
    /// Maximum requests in flight.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

impl fmt::Debug for InferenceEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InferenceEndpoint")
            .field("base_url", &self.base_url)
            .field("path", &self.path)
            .field("timeout_ms", &self.timeout_ms)
            .field("max_retries", &self.max_retries)
            .field("backoff_ms", &self.backoff_ms)
            .field("auth_header", &self.auth_header)
            .field("auth_token", &self.auth_token.as_ref().map(|_| "<redacted>"))
            .field("concurrency", &self.concurrency)
            .finish()
    }
}

impl InferenceEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        InferenceEndpoint {
            base_url: base_url.into(),
            path: default_path(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            backoff_ms: default_backoff_ms(),
            auth_header: default_auth_header(),
            auth_token: None,
            concurrency: default_concurrency(),
        }
    }

    /// Fills a missing base URL or token from `BIASLENS_ENDPOINT` /
    /// `BIASLENS_TOKEN`. Explicit values win.
    pub fn with_env_overrides(self) -> Self {
        let url = std::env::var(ENDPOINT_ENV).ok().filter(|_| self.base_url.is_empty());
        let token = std::env::var(TOKEN_ENV).ok().filter(|_| self.auth_token.is_none());
        self.with_overrides(url, token)
    }

    pub fn with_overrides(mut self, base_url: Option<String>, token: Option<String>) -> Self {
        if let Some(url) = base_url.filter(|u| !u.is_empty()) {
            self.base_url = url;
        }
        if let Some(token) = token.filter(|t| !t.is_empty()) {
            self.auth_token = Some(token);
        }
        self
    }

    pub fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if self.path.starts_with('/') {
            format!("{base}{}", self.path)
        } else {
            format!("{base}/{}", self.path)
        }
    }

    pub fn validate(&self) -> Result<(), EndpointError> {
        if self.timeout_ms == 0 {
            return Err(EndpointError::Config("timeout must be positive".into()));
        }
        if self.concurrency == 0 {
            return Err(EndpointError::Config("concurrency must be positive".into()));
        }
        reqwest::Url::parse(&self.url()).map_err(|e| EndpointError::Config(format!("bad url {:?}: {e}", self.url())))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ImageInput {
    /// Opaque identifier the endpoint resolves itself.
    Ref(String),
    /// Raw image bytes, sent base64-encoded.
    Inline(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaptionRequest {
    pub record_id: String,
    pub prompt: String,
    pub image: Option<ImageInput>,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_ref: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image: Option<String>,
}

#[derive(Deserialize)]
struct WireResponse {
    caption: String,
    #[serde(rename = "match")]
    matched: bool,
    #[serde(default)]
    score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FetchOutcome {
    pub caption: String,
    pub matched: bool,
    pub score: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct EndpointClient {
    http: reqwest::Client,
    config: InferenceEndpoint,
}

impl EndpointClient {
    pub fn new(config: InferenceEndpoint) -> Result<Self, EndpointError> {
        config.validate()?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| EndpointError::Config(e.to_string()))?;
        Ok(EndpointClient { http, config })
    }

    pub fn config(&self) -> &InferenceEndpoint {
        &self.config
    }

    async fn attempt(&self, prompt: &str, image: Option<&ImageInput>) -> Result<FetchOutcome, EndpointError> {
        let body = WireRequest {
            prompt,
            image_ref: match image {
                Some(ImageInput::Ref(r)) => Some(r),
                _ => None,
            },
            image: match image {
                Some(ImageInput::Inline(bytes)) => Some(base64::engine::general_purpose::STANDARD.encode(bytes)),
                _ => None,
            },
        };
        let mut req = self.http.post(self.config.url()).json(&body);
        if let Some(token) = &self.config.auth_token {
            let value = if self.config.auth_header.eq_ignore_ascii_case("authorization") {
                format!("Bearer {token}")
            } else {
                token.clone()
            };
            req = req.header(self.config.auth_header.as_str(), value);
        }
        let resp = req.send().await.map_err(classify)?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(EndpointError::Status {
                status: status.as_u16(),
                body: body.chars().take(200).collect(),
            });
        }
        let bytes = resp.bytes().await.map_err(classify)?;
        let wire: WireResponse =
            serde_json::from_slice(&bytes).map_err(|e| EndpointError::InvalidResponse(e.to_string()))?;
        if let Some(score) = wire.score {
            if !(0.0..=1.0).contains(&score) {
                return Err(EndpointError::InvalidResponse(format!("score {score} outside [0, 1]")));
            }
        }
        Ok(FetchOutcome {
            caption: wire.caption,
            matched: wire.matched,
            score: wire.score,
        })
    }

    /// One caption/verdict, retrying retriable failures with exponential
    /// backoff up to `max_retries` extra attempts.
    pub async fn fetch(&self, prompt: &str, image: Option<&ImageInput>) -> Result<FetchOutcome, EndpointError> {
        let mut attempt = 0;
        loop {
            match self.attempt(prompt, image).await {
                Ok(out) => return Ok(out),
                Err(e) if e.is_retriable() && attempt < self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    tracing::debug!(attempt, error = %e, delay_ms = delay, "retrying caption request");
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn classify(err: reqwest::Error) -> EndpointError {
    if err.is_timeout() {
        EndpointError::Timeout
    } else {
        EndpointError::Network(err.to_string())
    }
}

/// Single request against `endpoint`, building a one-off client.
pub async fn fetch_caption(
    endpoint: &InferenceEndpoint,
    image: Option<&ImageInput>,
    prompt: &str,
) -> Result<FetchOutcome, EndpointError> {
    EndpointClient::new(endpoint.clone())?.fetch(prompt, image).await
}

/// Runs every request with at most `concurrency` in flight. Results come
/// back in request order regardless of completion order; `on_result` sees
/// each one as it is yielded.
pub async fn fetch_all<F>(
    client: &EndpointClient,
    requests: Vec<CaptionRequest>,
    mut on_result: F,
) -> Vec<Result<CaptionRecord, FailedRecord>>
where
    F: FnMut(&Result<CaptionRecord, FailedRecord>),
{
    let limit = client.config.concurrency.max(1);
    let mut results = stream::iter(requests)
        .map(|req| async move {
            match client.fetch(&req.prompt, req.image.as_ref()).await {
                Ok(out) => Ok(CaptionRecord {
                    record_id: req.record_id,
                    prompt: req.prompt,
                    caption: out.caption,
                    matched: out.matched,
                    score: out.score,
                    image_ref: match req.image {
                        Some(ImageInput::Ref(r)) => Some(r),
                        _ => None,
                    },
                }),
                Err(e) => Err(FailedRecord {
                    record_id: req.record_id,
                    prompt: req.prompt,
                    error: e.to_string(),
                }),
            }
        })
        .buffered(limit);
    let mut out = Vec::new();
    while let Some(result) = results.next().await {
        on_result(&result);
        out.push(result);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_joining() {
        let mut e = InferenceEndpoint::new("http://localhost:9000/");
        assert_eq!(e.url(), "http://localhost:9000/caption");
        e.path = "v1/infer".into();
        assert_eq!(e.url(), "http://localhost:9000/v1/infer");
    }

    #[test]
    fn validation() {
        assert!(InferenceEndpoint::new("http://localhost:1").validate().is_ok());
        let mut e = InferenceEndpoint::new("http://localhost:1");
        e.timeout_ms = 0;
        assert!(matches!(e.validate(), Err(EndpointError::Config(_))));
        assert!(InferenceEndpoint::new("not a url").validate().is_err());
    }

    #[test]
    fn token_never_serialized_or_printed() {
        let e = InferenceEndpoint::new("http://x").with_overrides(None, Some("s3cret".into()));
        assert_eq!(e.auth_token.as_deref(), Some("s3cret"));
        assert!(!serde_json::to_string(&e).unwrap().contains("s3cret"));
        assert!(!format!("{e:?}").contains("s3cret"));
    }

    #[test]
    fn overrides() {
        let e = InferenceEndpoint::new("http://a").with_overrides(Some("http://b".into()), None);
        assert_eq!(e.base_url, "http://b");
        assert_eq!(e.auth_token, None);
        let e = e.with_overrides(Some(String::new()), Some(String::new()));
        assert_eq!(e.base_url, "http://b");
        assert_eq!(e.auth_token, None);
    }

    #[test]
    fn retriable_classes() {
        assert!(EndpointError::Timeout.is_retriable());
        assert!(EndpointError::Status { status: 503, body: String::new() }.is_retriable());
        assert!(EndpointError::Status { status: 429, body: String::new() }.is_retriable());
        assert!(!EndpointError::Status { status: 404, body: String::new() }.is_retriable());
        assert!(!EndpointError::InvalidResponse(String::new()).is_retriable());
    }
}

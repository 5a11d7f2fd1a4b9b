//! JSON-over-HTTP clients. Each call is a single `POST` of the request object;
//! the response body is one JSON object.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Annotation, Annotator, ClientError, RefineRequest, RefineResponse, Refiner, Source, TranslationRequest, Translator};

pub const API_KEY_ENV: &str = "TRILEX_API_KEY";

/// Something that can POST a JSON body and hand back the raw response text.
pub trait Transport: Send + Sync {
    fn post_json(&self, path: &str, body: &Value) -> Result<String, ClientError>;
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn post_json(&self, path: &str, body: &Value) -> Result<String, ClientError> {
        (**self).post_json(path, body)
    }
}

pub struct UreqTransport {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        UreqTransport {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    /// Reads the bearer token from `TRILEX_API_KEY` when set.
    pub fn from_env(base_url: &str, timeout: Duration) -> Self {
        Self::new(base_url, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()), timeout)
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, path: &str, body: &Value) -> Result<String, ClientError> {
        let url = format!("{}{}", self.base_url, path);
        let mut request = self.agent.post(&url).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        match request.send_string(&body.to_string()) {
            Ok(resp) => resp.into_string().map_err(|e| ClientError::Transport(format!("{url}: {e}"))),
            // 4xx means the request itself is wrong; retrying will not help
            Err(ureq::Error::Status(code, resp)) if (400..500).contains(&code) && code != 429 => {
                Err(ClientError::Protocol {
                    message: format!("{url} returned HTTP {code}"),
                    raw: resp.into_string().unwrap_or_default(),
                })
            }
            Err(e) => Err(ClientError::Transport(format!("{url}: {e}"))),
        }
    }
}

/// Endpoint paths, relative to the transport's base URL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Endpoints {
    pub translate: String,
    pub annotate: String,
    pub refine: String,
}

impl Default for Endpoints {
    fn default() -> Self {
        Endpoints { translate: "/translate".into(), annotate: "/annotate".into(), refine: "/refine".into() }
    }
}

fn exchange<Req: Serialize, Resp: DeserializeOwned>(
    transport: &dyn Transport,
    path: &str,
    req: &Req,
) -> Result<Resp, ClientError> {
    let body = serde_json::to_value(req).map_err(|e| ClientError::InvalidRequest(e.to_string()))?;
    let raw = transport.post_json(path, &body)?;
    serde_json::from_str(&raw).map_err(|e| ClientError::Protocol { message: e.to_string(), raw })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TranslateResponse {
    translation: Option<String>,
}

pub struct RemoteTranslator<T> {
    pub transport: T,
    pub path: String,
}

impl<T: Transport> Translator for RemoteTranslator<T> {
    fn translate(&self, req: &TranslationRequest) -> Result<Option<String>, ClientError> {
        let resp: TranslateResponse = exchange(&self.transport, &self.path, req)?;
        Ok(resp.translation.filter(|t| !t.trim().is_empty()))
    }
}

#[derive(Serialize)]
struct AnnotateRequest<'a> {
    text: &'a str,
}

pub struct RemoteAnnotator<T> {
    pub transport: T,
    pub path: String,
}

impl<T: Transport> Annotator for RemoteAnnotator<T> {
    fn annotate(&self, text: &str) -> Result<Annotation, ClientError> {
        let resp: Annotation = exchange(&self.transport, &self.path, &AnnotateRequest { text })?;
        if !resp.score.is_finite() || !(-1.0..=1.0).contains(&resp.score) {
            return Err(ClientError::Protocol {
                message: format!("polarity {} outside [-1, 1]", resp.score),
                raw: serde_json::to_string(&resp).unwrap_or_default(),
            });
        }
        Ok(resp)
    }
}

pub struct RemoteRefiner<T> {
    pub transport: T,
    pub path: String,
}

impl<T: Transport> Refiner for RemoteRefiner<T> {
    fn refine(&self, req: &RefineRequest) -> Result<RefineResponse, ClientError> {
        let body = serde_json::to_value(req).map_err(|e| ClientError::InvalidRequest(e.to_string()))?;
        let raw = self.transport.post_json(&self.path, &body)?;
        let resp: RefineResponse = serde_json::from_str(&raw)
            .map_err(|e| ClientError::Protocol { message: e.to_string(), raw: raw.clone() })?;
        resp.check().map_err(|message| ClientError::Protocol { message, raw })?;
        Ok(resp)
    }

    fn source(&self) -> Source {
        Source::Remote
    }
}

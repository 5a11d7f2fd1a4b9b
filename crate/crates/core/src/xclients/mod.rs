//! Protocols for the external services the pipeline talks to (translation,
//! sentence annotation, lexicon refinement), their deterministic built-in
//! mocks, and the retry/cache/concurrency layer shared by all of them.

mod cache;
mod guard;
pub mod http;
pub mod mock;
mod translate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::language::Language;
use crate::lexmodel::{collapse_whitespace, SentimentClass, SCORE_MAX, SCORE_MIN};

pub use cache::ResponseCache;
pub use guard::{InFlightLimiter, Permit, RetryPolicy};
pub use translate::{expand_lexicon, translate_two_step, MissingReport};

/// Upper bound on the number of context sentences sent with a refinement request.
pub const MAX_CONTEXTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response ({message}); raw payload: {raw}")]
    Protocol { message: String, raw: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::Transport(_))
    }
}

/// Whether a response came from a built-in mock or a remote service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Mock,
    Remote,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Mock => "mock",
            Source::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TranslationRequest {
    pub text: String,
    pub source: Language,
    pub target: Language,
}

impl TranslationRequest {
    pub fn new(text: &str, source: Language, target: Language) -> Result<Self, ClientError> {
        let text = collapse_whitespace(text);
        if text.is_empty() {
            return Err(ClientError::InvalidRequest("empty translation text".into()));
        }
        if source == target {
            return Err(ClientError::InvalidRequest(format!("source and target are both `{source}`")));
        }
        Ok(TranslationRequest { text, source, target })
    }
}

/// Sentence-level verdict from an annotator; `score` lies in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class: SentimentClass,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoOccurrence {
    pub co_token: String,
    pub association: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRequest {
    pub word: String,
    pub language: Language,
    pub current_score: f64,
    pub current_class: SentimentClass,
    pub pmi_pos: f64,
    pub pmi_neg: f64,
    pub cooccurrences: Vec<CoOccurrence>,
    pub contexts: Vec<String>,
}

impl RefineRequest {
    /// Truncates `contexts` to [`MAX_CONTEXTS`] and rejects non-finite numbers.
    pub fn validated(mut self) -> Result<Self, ClientError> {
        self.contexts.truncate(MAX_CONTEXTS);
        let finite = [self.current_score, self.pmi_pos, self.pmi_neg]
            .into_iter()
            .chain(self.cooccurrences.iter().map(|c| c.association))
            .all(f64::is_finite);
        if !finite {
            return Err(ClientError::InvalidRequest(format!("non-finite value in request for `{}`", self.word)));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResponse {
    pub new_class: SentimentClass,
    pub new_score: f64,
    pub rationale: String,
}

impl RefineResponse {
    pub fn check(&self) -> Result<(), String> {
        if !self.new_score.is_finite() || !(SCORE_MIN..=SCORE_MAX).contains(&self.new_score) {
            return Err(format!("score {} outside [-9, 9]", self.new_score));
        }
        if !self.new_class.agrees_with(self.new_score) {
            return Err(format!("score {} inconsistent with class {}", self.new_score, self.new_class));
        }
        Ok(())
    }
}

pub trait Translator: Send + Sync {
    /// `Ok(None)` means the service has no translation for the text.
    fn translate(&self, req: &TranslationRequest) -> Result<Option<String>, ClientError>;
}

pub trait Annotator: Send + Sync {
    fn annotate(&self, text: &str) -> Result<Annotation, ClientError>;
}

pub trait Refiner: Send + Sync {
    fn refine(&self, req: &RefineRequest) -> Result<RefineResponse, ClientError>;

    fn source(&self) -> Source;
}

impl<T: Translator + ?Sized> Translator for &T {
    fn translate(&self, req: &TranslationRequest) -> Result<Option<String>, ClientError> {
        (**self).translate(req)
    }
}

impl<T: Translator + ?Sized> Translator for Box<T> {
    fn translate(&self, req: &TranslationRequest) -> Result<Option<String>, ClientError> {
        (**self).translate(req)
    }
}

impl<T: Annotator + ?Sized> Annotator for Box<T> {
    fn annotate(&self, text: &str) -> Result<Annotation, ClientError> {
        (**self).annotate(text)
    }
}

impl<T: Refiner + ?Sized> Refiner for Box<T> {
    fn refine(&self, req: &RefineRequest) -> Result<RefineResponse, ClientError> {
        (**self).refine(req)
    }

    fn source(&self) -> Source {
        (**self).source()
    }
}

/// Retry, in-flight bound and response cache around any client.
pub struct Guarded<C> {
    inner: C,
    retry: RetryPolicy,
    limiter: InFlightLimiter,
    cache: ResponseCache,
}

impl<C> Guarded<C> {
    pub fn new(inner: C, retry: RetryPolicy, max_in_flight: usize, cache: ResponseCache) -> Self {
        Guarded { inner, retry, limiter: InFlightLimiter::new(max_in_flight), cache }
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    fn call<K, V, F>(&self, key: &K, f: F) -> Result<V, ClientError>
    where
        K: Serialize,
        V: Serialize + serde::de::DeserializeOwned,
        F: Fn(&C) -> Result<V, ClientError>,
    {
        self.cache.get_or_try(key, || {
            self.retry.run(|| {
                let _permit = self.limiter.acquire();
                f(&self.inner)
            })
        })
    }
}

impl<C: Translator> Translator for Guarded<C> {
    fn translate(&self, req: &TranslationRequest) -> Result<Option<String>, ClientError> {
        self.call(req, |c| c.translate(req))
    }
}

#[derive(Serialize)]
struct AnnotateKey<'a> {
    text: &'a str,
}

impl<C: Annotator> Annotator for Guarded<C> {
    fn annotate(&self, text: &str) -> Result<Annotation, ClientError> {
        self.call(&AnnotateKey { text }, |c| c.annotate(text))
    }
}

impl<C: Refiner> Refiner for Guarded<C> {
    fn refine(&self, req: &RefineRequest) -> Result<RefineResponse, ClientError> {
        self.call(req, |c| c.refine(req))
    }

    fn source(&self) -> Source {
        self.inner.source()
    }
}

/// Annotates one sentence through `client`.
pub fn annotate_sentence(text: &str, client: &dyn Annotator) -> Result<Annotation, ClientError> {
    if text.trim().is_empty() {
        return Err(ClientError::InvalidRequest("empty sentence".into()));
    }
    client.annotate(text)
}

/// Validates the request, calls the refiner and checks the verdict's invariants.
pub fn refine_entry(req: RefineRequest, client: &dyn Refiner) -> Result<RefineResponse, ClientError> {
    let req = req.validated()?;
    let resp = client.refine(&req)?;
    resp.check().map_err(|message| ClientError::Protocol {
        message,
        raw: serde_json::to_string(&resp).unwrap_or_default(),
    })?;
    Ok(resp)
}

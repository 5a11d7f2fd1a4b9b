//! Builds the translation, annotation and refinement clients: built-in mocks
//! when offline, HTTP clients otherwise. Every client sits behind retries, an
//! in-flight bound and a response cache, and counts calls that still failed.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use trilex::refine::{Clock, FixedClock, SystemClock};
use trilex::xclients::http::{RemoteAnnotator, RemoteRefiner, RemoteTranslator, Transport, UreqTransport};
use trilex::xclients::mock::{DictionaryTranslator, LexiconAnnotator, RuleRefiner};
use trilex::xclients::{
    Annotation, Annotator, ClientError, Guarded, RefineRequest, RefineResponse, Refiner, ResponseCache, RetryPolicy,
    Source, TranslationRequest, Translator,
};
use trilex::{Language, LexiconEntry};

use crate::config::PipelineConfig;

/// Creates the HTTP transport; only ever invoked for online runs.
pub type TransportFactory<'a> = &'a (dyn Fn(&PipelineConfig) -> Result<Arc<dyn Transport>> + Sync);

pub fn http_transport(cfg: &PipelineConfig) -> Result<Arc<dyn Transport>> {
    let base = cfg
        .clients
        .base_url
        .as_deref()
        .context("no clients.base_url configured; pass --offline to use the built-in mocks")?;
    Ok(Arc::new(UreqTransport::from_env(base, Duration::from_secs(cfg.clients.timeout_secs))))
}

/// Wraps a client and counts the errors it hands back.
pub struct Counted<C> {
    inner: C,
    failures: AtomicUsize,
}

impl<C> Counted<C> {
    fn new(inner: C) -> Self {
        Counted { inner, failures: AtomicUsize::new(0) }
    }

    pub fn failures(&self) -> usize {
        self.failures.load(Ordering::SeqCst)
    }

    fn tally<T>(&self, r: Result<T, ClientError>) -> Result<T, ClientError> {
        if r.is_err() {
            self.failures.fetch_add(1, Ordering::SeqCst);
        }
        r
    }
}

impl<C: Translator> Translator for Counted<C> {
    fn translate(&self, req: &TranslationRequest) -> Result<Option<String>, ClientError> {
        self.tally(self.inner.translate(req))
    }
}

impl<C: Annotator> Annotator for Counted<C> {
    fn annotate(&self, text: &str) -> Result<Annotation, ClientError> {
        self.tally(self.inner.annotate(text))
    }
}

impl<C: Refiner> Refiner for Counted<C> {
    fn refine(&self, req: &RefineRequest) -> Result<RefineResponse, ClientError> {
        self.tally(self.inner.refine(req))
    }

    fn source(&self) -> Source {
        self.inner.source()
    }
}

fn cache(cfg: &PipelineConfig, name: &str) -> Result<ResponseCache> {
    if cfg.offline {
        return Ok(ResponseCache::in_memory());
    }
    match cfg.cache_dir() {
        Some(dir) => {
            let path = dir.join(format!("{name}.jsonl"));
            ResponseCache::open(&path).with_context(|| format!("opening cache {}", path.display()))
        }
        None => Ok(ResponseCache::in_memory()),
    }
}

fn retry(cfg: &PipelineConfig) -> RetryPolicy {
    if cfg.offline {
        RetryPolicy::immediate(cfg.clients.attempts)
    } else {
        RetryPolicy { attempts: cfg.clients.attempts, ..RetryPolicy::default() }
    }
}

fn guarded<C>(cfg: &PipelineConfig, inner: C, name: &str) -> Result<Counted<Guarded<C>>> {
    Ok(Counted::new(Guarded::new(inner, retry(cfg), cfg.clients.max_in_flight, cache(cfg, name)?)))
}

pub fn translator(
    cfg: &PipelineConfig,
    lexicon: &[LexiconEntry],
    transport: TransportFactory,
) -> Result<Counted<Guarded<Box<dyn Translator>>>> {
    let inner: Box<dyn Translator> = if cfg.offline {
        Box::new(DictionaryTranslator::from_lexicon(lexicon, cfg.languages.source, cfg.languages.pivot))
    } else {
        Box::new(RemoteTranslator { transport: transport(cfg)?, path: cfg.clients.endpoints.translate.clone() })
    };
    guarded(cfg, inner, "translate")
}

pub fn annotator(
    cfg: &PipelineConfig,
    lexicon: &[LexiconEntry],
    lang: Language,
    transport: TransportFactory,
) -> Result<Counted<Guarded<Box<dyn Annotator>>>> {
    let inner: Box<dyn Annotator> = if cfg.offline {
        let t = &cfg.thresholds;
        Box::new(LexiconAnnotator::with_thresholds(lexicon, lang, t.tau_pos, t.tau_neg)?)
    } else {
        Box::new(RemoteAnnotator { transport: transport(cfg)?, path: cfg.clients.endpoints.annotate.clone() })
    };
    guarded(cfg, inner, "annotate")
}

pub fn refiner(cfg: &PipelineConfig, transport: TransportFactory) -> Result<Counted<Guarded<Box<dyn Refiner>>>> {
    let inner: Box<dyn Refiner> = if cfg.offline {
        Box::new(RuleRefiner::new(cfg.thresholds.theta))
    } else {
        Box::new(RemoteRefiner { transport: transport(cfg)?, path: cfg.clients.endpoints.refine.clone() })
    };
    guarded(cfg, inner, "refine")
}

/// Offline runs stamp audits with a fixed time so outputs are reproducible.
pub fn clock(cfg: &PipelineConfig) -> Box<dyn Clock> {
    if cfg.offline {
        Box::new(FixedClock(0))
    } else {
        Box::new(SystemClock)
    }
}

//! Deterministic in-process implementations of the service protocols.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Annotation, Annotator, ClientError, RefineRequest, RefineResponse, Refiner, Source, TranslationRequest, Translator};
use crate::language::Language;
use crate::lexmodel::{collapse_whitespace, LexiconEntry, SentimentClass};
use crate::senti::{label_from_score, LexiconScorer, SentiError, DEFAULT_TAU_NEG, DEFAULT_TAU_POS};

/// Counts calls and the peak number of calls in progress at once.
#[derive(Debug, Default)]
pub struct CallProbe {
    calls: AtomicUsize,
    current: AtomicUsize,
    peak: AtomicUsize,
    latency: Duration,
}

pub struct ProbeGuard<'a>(&'a CallProbe);

impl CallProbe {
    pub fn with_latency(latency: Duration) -> Self {
        CallProbe { latency, ..Default::default() }
    }

    pub fn enter(&self) -> ProbeGuard<'_> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        ProbeGuard(self)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl Drop for ProbeGuard<'_> {
    fn drop(&mut self) {
        self.0.current.fetch_sub(1, Ordering::SeqCst);
    }
}

/// One entry of a mock dictionary file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub source: Language,
    pub target: Language,
    pub text: String,
    pub translation: String,
}

/// Translator backed by a fixed lookup table. Lookups ignore case and
/// surrounding whitespace; unknown texts translate to `None`.
#[derive(Debug, Default)]
pub struct DictionaryTranslator {
    table: HashMap<(Language, Language, String), String>,
    failures_left: AtomicUsize,
    probe: CallProbe,
}

fn lookup_key(text: &str) -> String {
    collapse_whitespace(text).to_lowercase()
}

impl DictionaryTranslator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_probe(mut self, probe: CallProbe) -> Self {
        self.probe = probe;
        self
    }

    /// The first `n` calls fail with a transport error.
    pub fn with_transport_failures(self, n: usize) -> Self {
        self.failures_left.store(n, Ordering::SeqCst);
        self
    }

    /// Keeps the first translation registered for a key.
    pub fn insert(&mut self, source: Language, target: Language, text: &str, translation: &str) {
        let translation = collapse_whitespace(translation);
        if translation.is_empty() {
            return;
        }
        self.table.entry((source, target, lookup_key(text))).or_insert(translation);
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = DictionaryEntry>) {
        for e in entries {
            self.insert(e.source, e.target, &e.text, &e.translation);
        }
    }

    /// Builds `source -> pivot` and `pivot -> target` pairs from the columns
    /// already filled in `lexicon`.
    pub fn from_lexicon(lexicon: &[LexiconEntry], source: Language, pivot: Language) -> Self {
        let mut dict = Self::new();
        for e in lexicon {
            let Some(pivot_word) = e.word(pivot) else { continue };
            if let Some(src) = e.word(source) {
                dict.insert(source, pivot, src, pivot_word);
            }
            for lang in Language::ALL {
                if lang == pivot || lang == source {
                    continue;
                }
                if let Some(target_word) = e.word(lang) {
                    dict.insert(pivot, lang, pivot_word, target_word);
                }
            }
        }
        dict
    }

    pub fn probe(&self) -> &CallProbe {
        &self.probe
    }
}

impl Translator for DictionaryTranslator {
    fn translate(&self, req: &TranslationRequest) -> Result<Option<String>, ClientError> {
        let _g = self.probe.enter();
        let failing = self
            .failures_left
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        if failing {
            return Err(ClientError::Transport("injected failure".into()));
        }
        Ok(self.table.get(&(req.source, req.target, lookup_key(&req.text))).cloned())
    }
}

/// Returns every text unchanged.
#[derive(Debug, Default)]
pub struct IdentityTranslator {
    pub probe: CallProbe,
}

impl Translator for IdentityTranslator {
    fn translate(&self, req: &TranslationRequest) -> Result<Option<String>, ClientError> {
        let _g = self.probe.enter();
        Ok(Some(req.text.clone()))
    }
}

/// Annotator built on the lexicon scorer; the [-9, 9] score is divided by 9.
#[derive(Debug, Clone)]
pub struct LexiconAnnotator {
    scorer: LexiconScorer,
    tau_pos: f64,
    tau_neg: f64,
}

impl LexiconAnnotator {
    pub fn new(lexicon: &[LexiconEntry], lang: Language) -> Result<Self, SentiError> {
        Self::with_thresholds(lexicon, lang, DEFAULT_TAU_POS, DEFAULT_TAU_NEG)
    }

    pub fn with_thresholds(lexicon: &[LexiconEntry], lang: Language, tau_pos: f64, tau_neg: f64) -> Result<Self, SentiError> {
        label_from_score(0.0, tau_pos, tau_neg)?;
        Ok(LexiconAnnotator { scorer: LexiconScorer::new(lexicon, lang)?, tau_pos, tau_neg })
    }
}

impl Annotator for LexiconAnnotator {
    fn annotate(&self, text: &str) -> Result<Annotation, ClientError> {
        let score = self.scorer.score(text);
        let class = label_from_score(score, self.tau_pos, self.tau_neg).expect("thresholds validated at construction");
        Ok(Annotation { class, score: score / 9.0 })
    }
}

pub const DEFAULT_DEAD_ZONE: f64 = 0.2;

/// Reassigns a word to its corpus polarity: the sign of `pmi_pos - pmi_neg`
/// (Neutral inside the dead zone) with magnitude `ceil(|diff|)` clamped to [1, 9].
#[derive(Debug)]
pub struct RuleRefiner {
    pub dead_zone: f64,
    pub probe: CallProbe,
}

impl Default for RuleRefiner {
    fn default() -> Self {
        RuleRefiner { dead_zone: DEFAULT_DEAD_ZONE, probe: CallProbe::default() }
    }
}

impl RuleRefiner {
    pub fn new(dead_zone: f64) -> Self {
        RuleRefiner { dead_zone, probe: CallProbe::default() }
    }
}

impl Refiner for RuleRefiner {
    fn refine(&self, req: &RefineRequest) -> Result<RefineResponse, ClientError> {
        let _g = self.probe.enter();
        let diff = req.pmi_pos - req.pmi_neg;
        let new_class = SentimentClass::from_sign(diff, self.dead_zone);
        let magnitude = diff.abs().ceil().clamp(1.0, 9.0);
        let new_score = match new_class {
            SentimentClass::Positive => magnitude,
            SentimentClass::Negative => -magnitude,
            SentimentClass::Neutral => 0.0,
        };
        let rationale = match new_class {
            SentimentClass::Neutral => format!(
                "corpus PMI difference {diff:.6} lies inside the neutral band of {}; score set to 0",
                self.dead_zone
            ),
            _ => format!(
                "corpus PMI difference {diff:.6} indicates {new_class}; score = sign x clamp(ceil(|diff|), 1, 9) = {new_score}"
            ),
        };
        Ok(RefineResponse { new_class, new_score, rationale })
    }

    fn source(&self) -> Source {
        Source::Mock
    }
}

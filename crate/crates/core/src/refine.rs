//! Reconciles lexicon polarity with corpus polarity: flags entries whose
//! sentiment class disagrees with the PMI evidence and reassigns them
//! through a [`Refiner`], recording every call in an audit trail.

use std::collections::HashMap;
use std::io::{self, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpstats::{CooccurrenceRecord, PmiRecord, DEFAULT_DEAD_ZONE};
use crate::language::Language;
use crate::lexmodel::{LexiconEntry, SentimentClass};
use crate::senti::LabeledSentence;
use crate::textnorm::{normalize_text, tokenize, NormalizationConfig};
use crate::xclients::{refine_entry, CoOccurrence, RefineRequest, RefineResponse, Refiner, Source, MAX_CONTEXTS};

pub const DEFAULT_MIN_SUPPORT: u64 = 3;
const MAX_COOCCURRENCES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarityParams {
    pub theta: f64,
    pub min_support: u64,
}

impl Default for PolarityParams {
    fn default() -> Self {
        PolarityParams { theta: DEFAULT_DEAD_ZONE, min_support: DEFAULT_MIN_SUPPORT }
    }
}

/// Corpus polarity of a token, or `None` with fewer than `min_support` occurrences.
pub fn corpus_polarity(record: &PmiRecord, theta: f64, min_support: u64) -> Option<SentimentClass> {
    if record.counts.total() < min_support {
        return None;
    }
    Some(SentimentClass::from_sign(record.pmi_diff, theta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchRecord {
    /// Index of the lexicon entry this record refers to.
    pub row: usize,
    pub word: String,
    pub language: Language,
    pub lexicon_class: SentimentClass,
    pub corpus_class: SentimentClass,
    pub pmi_diff: f64,
    pub support: u64,
}

fn lookup_form(word: &str) -> String {
    normalize_text(word, &NormalizationConfig::default())
}

/// One record per lexicon entry whose `language` word has a defined corpus
/// polarity different from its sentiment class, ordered by word then row.
pub fn detect_mismatches(
    lexicon: &[LexiconEntry],
    pmi: &[PmiRecord],
    language: Language,
    params: PolarityParams,
) -> Vec<MismatchRecord> {
    let by_token: HashMap<&str, &PmiRecord> = pmi.iter().map(|r| (r.token.as_str(), r)).collect();
    let mut out: Vec<MismatchRecord> = lexicon
        .iter()
        .enumerate()
        .filter_map(|(row, e)| {
            let word = lookup_form(e.word(language)?);
            let record = by_token.get(word.as_str())?;
            let corpus_class = corpus_polarity(record, params.theta, params.min_support)?;
            (corpus_class != e.sentiment).then(|| MismatchRecord {
                row,
                word,
                language,
                lexicon_class: e.sentiment,
                corpus_class,
                pmi_diff: record.pmi_diff,
                support: record.counts.total(),
            })
        })
        .collect();
    out.sort_by(|a, b| a.word.cmp(&b.word).then(a.row.cmp(&b.row)));
    out
}

/// Corpus evidence attached to refinement requests.
#[derive(Debug, Default)]
pub struct Evidence {
    pmi: HashMap<String, PmiRecord>,
    cooccurrences: HashMap<String, Vec<CoOccurrence>>,
    contexts: HashMap<String, Vec<String>>,
}

impl Evidence {
    /// `corpus` text is expected in normalized form; the first
    /// [`MAX_CONTEXTS`] sentences containing a token become its contexts.
    pub fn new(pmi: &[PmiRecord], cooc: &[CooccurrenceRecord], corpus: &[LabeledSentence]) -> Self {
        let mut cooccurrences: HashMap<String, Vec<CoOccurrence>> = HashMap::new();
        for c in cooc {
            for (token, partner) in [(&c.token, &c.co_token), (&c.co_token, &c.token)] {
                let list = cooccurrences.entry(token.clone()).or_default();
                if !list.iter().any(|x| &x.co_token == partner) {
                    list.push(CoOccurrence { co_token: partner.clone(), association: c.association });
                }
            }
        }
        for list in cooccurrences.values_mut() {
            list.sort_by(|a, b| {
                b.association.abs().total_cmp(&a.association.abs()).then_with(|| a.co_token.cmp(&b.co_token))
            });
            list.truncate(MAX_COOCCURRENCES);
        }

        let mut contexts: HashMap<String, Vec<String>> = HashMap::new();
        for s in corpus {
            let mut tokens = tokenize(&s.text);
            tokens.sort();
            tokens.dedup();
            for t in tokens {
                let list = contexts.entry(t).or_default();
                if list.len() < MAX_CONTEXTS {
                    list.push(s.text.clone());
                }
            }
        }

        Evidence {
            pmi: pmi.iter().map(|r| (r.token.clone(), r.clone())).collect(),
            cooccurrences,
            contexts,
        }
    }

    pub fn request_for(&self, m: &MismatchRecord, entry: &LexiconEntry) -> RefineRequest {
        let (pmi_pos, pmi_neg) = self.pmi.get(&m.word).map_or((0.0, -m.pmi_diff), |r| (r.pmi_pos, r.pmi_neg));
        RefineRequest {
            word: m.word.clone(),
            language: m.language,
            current_score: entry.score,
            current_class: entry.sentiment,
            pmi_pos,
            pmi_neg,
            cooccurrences: self.cooccurrences.get(&m.word).cloned().unwrap_or_default(),
            contexts: self.contexts.get(&m.word).cloned().unwrap_or_default(),
        }
    }
}

pub trait Clock: Send + Sync {
    /// Seconds since the Unix epoch.
    fn now(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
    }
}

/// Always reports the same instant; keeps audit files reproducible.
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub mismatch: MismatchRecord,
    pub request: RefineRequest,
    pub response: Option<RefineResponse>,
    pub error: Option<String>,
    pub timestamp: u64,
    pub source: Source,
}

/// Append-only record of refinement calls.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementAudit {
    entries: Vec<AuditEntry>,
}

impl RefinementAudit {
    pub fn push(&mut self, entry: AuditEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn successes(&self) -> usize {
        self.entries.iter().filter(|e| e.response.is_some()).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditEntry> {
        self.entries.iter().filter(|e| e.response.is_none())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    /// Flagged entries the refiner could not resolve, for offline review.
    pub fn write_unrefined_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "word", "language", "lexicon_class", "corpus_class", "pmi_diff", "support", "error"])?;
        for e in self.failures() {
            let m = &e.mismatch;
            w.write_record([
                m.row.to_string(),
                m.word.clone(),
                m.language.code().to_string(),
                m.lexicon_class.to_string(),
                m.corpus_class.to_string(),
                format!("{:.6}", m.pmi_diff),
                m.support.to_string(),
                e.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sends every mismatch to `refiner` (concurrently) and then applies the
/// verdicts in mismatch order. Entries whose call fails stay unchanged and
/// the error is kept in the audit.
pub fn apply_refinements(
    mismatches: &[MismatchRecord],
    refiner: &dyn Refiner,
    lexicon: &[LexiconEntry],
    evidence: &Evidence,
    clock: &dyn Clock,
) -> (Vec<LexiconEntry>, RefinementAudit) {
    let source = refiner.source();
    let outcomes: Vec<(RefineRequest, Result<RefineResponse, String>, u64)> = mismatches
        .par_iter()
        .map(|m| {
            let request = evidence.request_for(m, &lexicon[m.row]);
            let outcome = refine_entry(request.clone(), refiner).map_err(|e| e.to_string());
            (request, outcome, clock.now())
        })
        .collect();

    let mut updated = lexicon.to_vec();
    let mut audit = RefinementAudit::default();
    for (m, (mut request, outcome, timestamp)) in mismatches.iter().zip(outcomes) {
        request.contexts.truncate(MAX_CONTEXTS);
        let (response, error) = match outcome {
            Ok(resp) => {
                let entry = &mut updated[m.row];
                entry.sentiment = resp.new_class;
                entry.score = resp.new_score;
                (Some(resp), None)
            }
            Err(e) => (None, Some(e)),
        };
        audit.push(AuditEntry { mismatch: m.clone(), request, response, error, timestamp, source });
    }
    (updated, audit)
}

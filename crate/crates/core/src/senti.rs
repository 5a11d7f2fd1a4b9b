//! Lexicon-based sentence scoring, leave-one-out token contributions and
//! class-distribution reporting over labeled corpora.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::language::Language;
use crate::lexmodel::{LexiconEntry, SentimentClass};
use crate::textnorm::{tokenize, NormalizationConfig, Normalizer};

pub const DEFAULT_TAU_POS: f64 = 0.5;
pub const DEFAULT_TAU_NEG: f64 = -0.5;

#[derive(Debug, thiserror::Error)]
pub enum SentiError {
    #[error("lexicon has no `{0}` column entries")]
    UnknownColumn(Language),
    #[error("thresholds must satisfy tau_neg < tau_pos (got {tau_neg} and {tau_pos})")]
    Thresholds { tau_pos: f64, tau_neg: f64 },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("sentence `{0}` has no label")]
    MissingLabel(String),
    #[error("duplicate sentence id `{0}`")]
    DuplicateId(String),
    #[error("{}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}", path.display())]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub id: String,
    pub text: String,
    pub lang: Language,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<SentimentClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl LabeledSentence {
    pub fn new(id: impl Into<String>, text: impl Into<String>, lang: Language, label: Option<SentimentClass>) -> Self {
        LabeledSentence { id: id.into(), text: text.into(), lang, label, score: None }
    }
}

/// Reads a JSONL corpus, rejecting duplicate ids. Blank lines are ignored.
pub fn read_corpus(path: &Path) -> Result<Vec<LabeledSentence>, SentiError> {
    let io_err = |source| SentiError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut seen = HashSet::new();
    let mut corpus = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let sentence: LabeledSentence = serde_json::from_str(&line)
            .map_err(|source| SentiError::Json { path: path.to_path_buf(), line: i + 1, source })?;
        if !seen.insert(sentence.id.clone()) {
            return Err(SentiError::DuplicateId(sentence.id));
        }
        corpus.push(sentence);
    }
    Ok(corpus)
}

pub fn write_corpus_to<W: Write>(corpus: &[LabeledSentence], mut out: W) -> io::Result<()> {
    for s in corpus {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenContribution {
    pub token: String,
    pub weight: f64,
}

/// A scored unit of a sentence: a matched lexicon phrase or an unmatched token.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub text: String,
    pub score: Option<f64>,
}

/// Scores sentences against one language column of a lexicon.
///
/// Lexicon words are normalized like sentence text and matched greedily,
/// longest phrase first. A sentence scores the mean over all of its units,
/// where unmatched tokens count as zero. Words that appear in several
/// entries take the mean of their scores.
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    normalizer: Normalizer,
    phrases: HashMap<Vec<String>, f64>,
    longest: usize,
}

impl LexiconScorer {
    pub fn new(lexicon: &[LexiconEntry], lang: Language) -> Result<Self, SentiError> {
        let normalizer =
            Normalizer::new(NormalizationConfig::default()).expect("default normalization config is valid");
        let mut sums: HashMap<Vec<String>, (f64, usize)> = HashMap::new();
        for e in lexicon {
            let Some(word) = e.word(lang) else { continue };
            let key = tokenize(&normalizer.normalize(word));
            if key.is_empty() {
                continue;
            }
            let slot = sums.entry(key).or_insert((0.0, 0));
            slot.0 += e.score;
            slot.1 += 1;
        }
        if sums.is_empty() {
            return Err(SentiError::UnknownColumn(lang));
        }
        let longest = sums.keys().map(Vec::len).max().unwrap_or(1);
        let phrases = sums.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect();
        Ok(LexiconScorer { normalizer, phrases, longest })
    }

    pub fn lookup(&self, phrase: &[String]) -> Option<f64> {
        self.phrases.get(phrase).copied()
    }

    pub fn units(&self, text: &str) -> Vec<Unit> {
        let tokens = tokenize(&self.normalizer.normalize(text));
        let mut units = Vec::with_capacity(tokens.len());
        let mut i = 0;
        while i < tokens.len() {
            let max = self.longest.min(tokens.len() - i);
            let matched = (1..=max).rev().find_map(|n| self.lookup(&tokens[i..i + n]).map(|s| (n, s)));
            match matched {
                Some((n, score)) => {
                    units.push(Unit { text: tokens[i..i + n].join(" "), score: Some(score) });
                    i += n;
                }
                None => {
                    units.push(Unit { text: tokens[i].clone(), score: None });
                    i += 1;
                }
            }
        }
        units
    }

    pub fn score(&self, text: &str) -> f64 {
        mean_score(&self.units(text))
    }

    /// Leave-one-out contribution of every distinct unit, sorted by absolute
    /// weight descending, then token ascending.
    pub fn explain(&self, text: &str) -> Vec<TokenContribution> {
        let units = self.units(text);
        let full = mean_score(&units);
        let distinct: BTreeMap<&str, ()> = units.iter().map(|u| (u.text.as_str(), ())).collect();
        let mut out: Vec<TokenContribution> = distinct
            .into_keys()
            .map(|token| {
                let rest: Vec<Unit> = units.iter().filter(|u| u.text != token).cloned().collect();
                TokenContribution { token: token.to_string(), weight: full - mean_score(&rest) }
            })
            .collect();
        out.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()).then_with(|| a.token.cmp(&b.token)));
        out
    }
}

fn mean_score(units: &[Unit]) -> f64 {
    if units.is_empty() {
        return 0.0;
    }
    units.iter().filter_map(|u| u.score).sum::<f64>() / units.len() as f64
}

pub fn score_sentence(text: &str, lang: Language, lexicon: &[LexiconEntry]) -> Result<f64, SentiError> {
    Ok(LexiconScorer::new(lexicon, lang)?.score(text))
}

pub fn explain_tokens(text: &str, lang: Language, lexicon: &[LexiconEntry]) -> Result<Vec<TokenContribution>, SentiError> {
    Ok(LexiconScorer::new(lexicon, lang)?.explain(text))
}

/// Positive above `tau_pos`, Negative below `tau_neg`, Neutral in between (inclusive).
pub fn label_from_score(score: f64, tau_pos: f64, tau_neg: f64) -> Result<SentimentClass, SentiError> {
    if !(tau_neg < tau_pos) {
        return Err(SentiError::Thresholds { tau_pos, tau_neg });
    }
    Ok(if score > tau_pos {
        SentimentClass::Positive
    } else if score < tau_neg {
        SentimentClass::Negative
    } else {
        SentimentClass::Neutral
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassShare {
    pub class: SentimentClass,
    pub count: usize,
    /// Percentage rounded to one decimal.
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub total: usize,
    pub classes: Vec<ClassShare>,
}

impl DistributionReport {
    pub fn get(&self, class: SentimentClass) -> ClassShare {
        self.classes[class.index()]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "count", "percentage"])?;
        for share in &self.classes {
            w.write_record([share.class.to_string(), share.count.to_string(), format!("{:.1}", share.percentage)])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn distribution_report(corpus: &[LabeledSentence]) -> Result<DistributionReport, SentiError> {
    if corpus.is_empty() {
        return Err(SentiError::EmptyCorpus);
    }
    let mut counts = [0usize; 3];
    for s in corpus {
        let label = s.label.ok_or_else(|| SentiError::MissingLabel(s.id.clone()))?;
        counts[label.index()] += 1;
    }
    let total = corpus.len();
    let classes = SentimentClass::ORDER
        .iter()
        .map(|&class| {
            let count = counts[class.index()];
            let percentage = (count as f64 * 1000.0 / total as f64).round() / 10.0;
            ClassShare { class, count, percentage }
        })
        .collect();
    Ok(DistributionReport { total, classes })
}

//! Text normalization, whitespace tokenization and vocabulary-based fuzzy
//! spelling correction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::language::Language;
use crate::lexmodel::LexiconEntry;

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.90;

pub type Vocabulary = BTreeSet<String>;
pub type Vocabularies = BTreeMap<Language, Vocabulary>;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("similarity is undefined for an empty token")]
    EmptyToken,
    #[error("no vocabulary loaded for language `{0}`")]
    UnknownLanguage(Language),
    #[error("vocabulary for language `{0}` is empty")]
    EmptyVocabulary(Language),
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("keep character {0:?} is not punctuation")]
    KeepChar(char),
    #[error("{}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub keep_chars: BTreeSet<char>,
    pub normalize_accents: bool,
    pub collapse_whitespace: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            lowercase: true,
            strip_punctuation: true,
            keep_chars: BTreeSet::from(['-', '\'']),
            normalize_accents: true,
            collapse_whitespace: true,
        }
    }
}

fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace() && !c.is_control() && !is_combining_mark(c)
}

impl NormalizationConfig {
    pub fn validate(&self) -> Result<(), TextError> {
        match self.keep_chars.iter().find(|c| !is_punctuation(**c)) {
            Some(&c) => Err(TextError::KeepChar(c)),
            None => Ok(()),
        }
    }
}

/// Applies a [`NormalizationConfig`], optionally guarding accented vocabulary
/// tokens whose folded forms would collide.
#[derive(Debug, Clone, Default)]
pub struct Normalizer {
    cfg: NormalizationConfig,
    protected: HashSet<String>,
}

impl Normalizer {
    pub fn new(cfg: NormalizationConfig) -> Result<Self, TextError> {
        cfg.validate()?;
        Ok(Normalizer { cfg, protected: HashSet::new() })
    }

    /// Tokens of `vocab` that would merge with another vocabulary token once
    /// accents are dropped are left unfolded.
    pub fn with_accent_guard<'a>(mut self, vocab: impl IntoIterator<Item = &'a str>) -> Self {
        let mut groups: HashMap<String, BTreeSet<String>> = HashMap::new();
        for token in vocab {
            let token = self.prepare_token(token);
            if !token.is_empty() {
                groups.entry(fold_accents(&token)).or_default().insert(token);
            }
        }
        self.protected = groups
            .into_values()
            .filter(|forms| forms.len() > 1)
            .flatten()
            .collect();
        self
    }

    pub fn config(&self) -> &NormalizationConfig {
        &self.cfg
    }

    fn prepare_token(&self, token: &str) -> String {
        let cased = if self.cfg.lowercase { token.to_lowercase() } else { token.to_string() };
        let composed: String = cased.nfc().collect();
        if self.cfg.strip_punctuation {
            composed
                .chars()
                .filter(|c| c.is_alphanumeric() || is_combining_mark(*c) || self.cfg.keep_chars.contains(c))
                .collect()
        } else {
            composed
        }
    }

    fn normalize_token(&self, token: &str) -> String {
        let prepared = self.prepare_token(token);
        if self.cfg.normalize_accents && !self.protected.contains(&prepared) {
            fold_accents(&prepared)
        } else {
            prepared
        }
    }

    pub fn normalize(&self, text: &str) -> String {
        if self.cfg.collapse_whitespace {
            return text
                .split_whitespace()
                .map(|t| self.normalize_token(t))
                .filter(|t| !t.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
        }
        let mut out = String::with_capacity(text.len());
        let mut token = String::new();
        for c in text.chars() {
            if c.is_whitespace() {
                out.push_str(&self.normalize_token(&token));
                token.clear();
                out.push(c);
            } else {
                token.push(c);
            }
        }
        out.push_str(&self.normalize_token(&token));
        out
    }
}

/// Canonical decomposition with combining marks dropped, recomposed.
pub fn fold_accents(s: &str) -> String {
    s.nfd().filter(|c| !is_combining_mark(*c)).nfc().collect()
}

pub fn normalize_text(text: &str, cfg: &NormalizationConfig) -> String {
    Normalizer { cfg: cfg.clone(), protected: HashSet::new() }.normalize(text)
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// `1 - lev(a, b) / max(|a|, |b|)` over Unicode scalar values.
pub fn similarity(a: &str, b: &str) -> Result<f64, TextError> {
    if a.is_empty() || b.is_empty() {
        return Err(TextError::EmptyToken);
    }
    let longest = a.chars().count().max(b.chars().count());
    Ok(1.0 - strsim::levenshtein(a, b) as f64 / longest as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrectionStatus {
    AutoCorrected,
    Flagged,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub language: Language,
    pub original: String,
    pub corrected: Option<String>,
    /// Similarity of the best vocabulary candidate.
    pub similarity: f64,
    pub status: CorrectionStatus,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageCorrections {
    pub auto_corrections: usize,
    pub flagged: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub per_language: BTreeMap<Language, LanguageCorrections>,
}

impl CorrectionReport {
    pub fn from_records(records: &[CorrectionRecord]) -> Self {
        let mut report = CorrectionReport::default();
        for r in records {
            let counts = report.per_language.entry(r.language).or_default();
            match r.status {
                CorrectionStatus::AutoCorrected => counts.auto_corrections += 1,
                CorrectionStatus::Flagged => counts.flagged += 1,
                CorrectionStatus::Unchanged => {}
            }
        }
        report
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["language", "auto_corrections", "flagged"])?;
        for (lang, c) in &self.per_language {
            w.write_record([lang.code().to_string(), c.auto_corrections.to_string(), c.flagged.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn best_candidate<'v>(token: &str, vocab: &'v Vocabulary) -> (Option<&'v str>, f64) {
    let len = token.chars().count();
    let mut best: Option<(&str, f64)> = None;
    for candidate in vocab {
        let clen = candidate.chars().count();
        if let Some((_, best_sim)) = best {
            let bound = 1.0 - len.abs_diff(clen) as f64 / len.max(clen) as f64;
            if bound <= best_sim {
                continue;
            }
        }
        // candidates are non-empty (filtered at load) and the token is non-empty
        let sim = similarity(token, candidate).unwrap_or(0.0);
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((candidate.as_str(), sim));
        }
    }
    match best {
        Some((c, s)) => (Some(c), s),
        None => (None, 0.0),
    }
}

fn correct_one(lang: Language, token: &str, vocab: &Vocabulary, threshold: f64) -> CorrectionRecord {
    if vocab.contains(token) {
        return CorrectionRecord {
            language: lang,
            original: token.to_string(),
            corrected: None,
            similarity: 1.0,
            status: CorrectionStatus::Unchanged,
        };
    }
    let (candidate, sim) =
        if token.is_empty() { (None, 0.0) } else { best_candidate(token, vocab) };
    match candidate {
        Some(c) if sim >= threshold => CorrectionRecord {
            language: lang,
            original: token.to_string(),
            corrected: Some(c.to_string()),
            similarity: sim,
            status: CorrectionStatus::AutoCorrected,
        },
        _ => CorrectionRecord {
            language: lang,
            original: token.to_string(),
            corrected: None,
            similarity: sim,
            status: CorrectionStatus::Flagged,
        },
    }
}

/// Matches every out-of-vocabulary token to its most similar vocabulary entry
/// (ties go to the lexicographically smallest candidate). Matches at or above
/// `threshold` are auto-corrected, the rest flagged for review. Output order
/// follows input order.
pub fn correct_tokens(
    tokens: &[(Language, String)],
    vocab: &Vocabularies,
    threshold: f64,
) -> Result<(Vec<CorrectionRecord>, CorrectionReport), TextError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(TextError::Threshold(threshold));
    }
    for (lang, _) in tokens {
        match vocab.get(lang) {
            None => return Err(TextError::UnknownLanguage(*lang)),
            Some(v) if v.is_empty() => return Err(TextError::EmptyVocabulary(*lang)),
            Some(_) => {}
        }
    }
    let records: Vec<CorrectionRecord> = tokens
        .par_iter()
        .map(|(lang, token)| correct_one(*lang, token, &vocab[lang], threshold))
        .collect();
    let report = CorrectionReport::from_records(&records);
    Ok((records, report))
}

/// Reads a one-token-per-line vocabulary file. Blank lines are ignored.
pub fn load_vocabulary(path: &Path) -> Result<Vocabulary, TextError> {
    let text = std::fs::read_to_string(path).map_err(|source| TextError::Io { path: path.to_path_buf(), source })?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect())
}

/// Loads `<code>.txt` for every known language present in `dir`.
pub fn load_vocab_dir(dir: &Path) -> Result<Vocabularies, TextError> {
    let mut vocabularies = Vocabularies::new();
    for lang in Language::ALL {
        let path = dir.join(format!("{}.txt", lang.code()));
        if path.is_file() {
            vocabularies.insert(lang, load_vocabulary(&path)?);
        }
    }
    Ok(vocabularies)
}

/// Normalizes every word column of every entry. When vocabularies are given,
/// each language's accent guard is built from its vocabulary.
pub fn normalize_lexicon(
    entries: &[LexiconEntry],
    cfg: &NormalizationConfig,
    vocab: Option<&Vocabularies>,
) -> Result<Vec<LexiconEntry>, TextError> {
    let base = Normalizer::new(cfg.clone())?;
    let normalizers: BTreeMap<Language, Normalizer> = Language::ALL
        .into_iter()
        .map(|lang| {
            let n = match vocab.and_then(|v| v.get(&lang)) {
                Some(words) => base.clone().with_accent_guard(words.iter().map(String::as_str)),
                None => base.clone(),
            };
            (lang, n)
        })
        .collect();
    Ok(entries
        .par_iter()
        .map(|e| {
            let mut e = e.clone();
            for lang in Language::ALL {
                if let Some(word) = e.word(lang) {
                    let normalized = normalizers[&lang].normalize(word);
                    e.set_word(lang, Some(normalized));
                }
            }
            e
        })
        .collect())
}

/// Runs fuzzy correction over the tokens of every word column that has a
/// vocabulary, replacing auto-corrected tokens in place.
pub fn correct_lexicon(
    entries: &[LexiconEntry],
    vocab: &Vocabularies,
    threshold: f64,
) -> Result<(Vec<LexiconEntry>, Vec<CorrectionRecord>, CorrectionReport), TextError> {
    let langs: Vec<Language> = Language::ALL.into_iter().filter(|l| vocab.contains_key(l)).collect();
    let mut tokens = Vec::new();
    for e in entries {
        for &lang in &langs {
            if let Some(word) = e.word(lang) {
                tokens.extend(tokenize(word).into_iter().map(|t| (lang, t)));
            }
        }
    }
    let (records, report) = correct_tokens(&tokens, vocab, threshold)?;

    let mut corrected = entries.to_vec();
    let mut it = records.iter();
    for e in &mut corrected {
        for &lang in &langs {
            let Some(word) = e.word(lang) else { continue };
            let rebuilt: Vec<String> = tokenize(word)
                .into_iter()
                .map(|t| {
                    let r = it.next().expect("one record per token");
                    debug_assert_eq!(r.original, t);
                    r.corrected.clone().unwrap_or(t)
                })
                .collect();
            e.set_word(lang, Some(rebuilt.join(" ")));
        }
    }
    Ok((corrected, records, report))
}

/// Writes the manual-review queue (flagged records only).
pub fn write_flagged_csv<W: Write>(records: &[CorrectionRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["language", "token", "similarity"])?;
    for r in records.iter().filter(|r| r.status == CorrectionStatus::Flagged) {
        w.write_record([r.language.code().to_string(), r.original.clone(), format!("{:.6}", r.similarity)])?;
    }
    w.flush()?;
    Ok(())
}

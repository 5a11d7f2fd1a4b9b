//! Lexicon rows, CSV ingestion and serialization, and the cleaning pass
//! (whitespace normalization plus exact-duplicate removal).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::language::Language;

pub const SCORE_MIN: f64 = -9.0;
pub const SCORE_MAX: f64 = 9.0;

/// Sentence- or word-level polarity. The variant order is the canonical class
/// order used by every matrix and probability vector in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentClass {
    Negative,
    Neutral,
    Positive,
}

impl SentimentClass {
    pub const ORDER: [SentimentClass; 3] =
        [SentimentClass::Negative, SentimentClass::Neutral, SentimentClass::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ORDER.get(i).copied()
    }

    /// Parses the label used in the lexicon's `Sentiment` column.
    pub fn from_lexicon_label(s: &str) -> Option<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("positif") {
            Some(SentimentClass::Positive)
        } else if s.eq_ignore_ascii_case("negatif") {
            Some(SentimentClass::Negative)
        } else if s.eq_ignore_ascii_case("neutre") {
            Some(SentimentClass::Neutral)
        } else {
            None
        }
    }

    pub fn lexicon_label(self) -> &'static str {
        match self {
            SentimentClass::Positive => "Positif",
            SentimentClass::Negative => "Negatif",
            SentimentClass::Neutral => "Neutre",
        }
    }

    /// Three-letter tag used in co-occurrence tables.
    pub fn short(self) -> &'static str {
        match self {
            SentimentClass::Positive => "Pos",
            SentimentClass::Negative => "Neg",
            SentimentClass::Neutral => "Neu",
        }
    }

    /// Class implied by the sign of a value, with `|value| < dead_zone` mapped to Neutral.
    pub fn from_sign(value: f64, dead_zone: f64) -> Self {
        if value.abs() < dead_zone || value == 0.0 {
            SentimentClass::Neutral
        } else if value > 0.0 {
            SentimentClass::Positive
        } else {
            SentimentClass::Negative
        }
    }

    /// Whether `score` has the sign this class requires (zero for Neutral).
    pub fn agrees_with(self, score: f64) -> bool {
        match self {
            SentimentClass::Positive => score > 0.0,
            SentimentClass::Negative => score < 0.0,
            SentimentClass::Neutral => score == 0.0,
        }
    }
}

impl fmt::Display for SentimentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SentimentClass::Positive => "positive",
            SentimentClass::Negative => "negative",
            SentimentClass::Neutral => "neutral",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown sentiment label `{0}`")]
pub struct UnknownSentiment(pub String);

impl FromStr for SentimentClass {
    type Err = UnknownSentiment;

    /// Accepts English names and their three-letter tags as well as the lexicon labels.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "positive" | "pos" => Ok(SentimentClass::Positive),
            "negative" | "neg" => Ok(SentimentClass::Negative),
            "neutral" | "neu" => Ok(SentimentClass::Neutral),
            _ => SentimentClass::from_lexicon_label(&t).ok_or_else(|| UnknownSentiment(s.to_string())),
        }
    }
}

/// Part-of-speech tag from the `Nature` column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PartOfSpeech {
    Verb,
    Word,
    Other(String),
}

impl PartOfSpeech {
    pub fn parse(raw: &str) -> Self {
        let tag = collapse_whitespace(raw);
        if tag.eq_ignore_ascii_case("verbe") || tag.eq_ignore_ascii_case("verb") {
            PartOfSpeech::Verb
        } else if tag.eq_ignore_ascii_case("mot") || tag.eq_ignore_ascii_case("word") {
            PartOfSpeech::Word
        } else {
            PartOfSpeech::Other(tag)
        }
    }
}

impl fmt::Display for PartOfSpeech {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartOfSpeech::Verb => f.write_str("Verbe"),
            PartOfSpeech::Word => f.write_str("Mot"),
            PartOfSpeech::Other(s) => f.write_str(s),
        }
    }
}

/// One multilingual lexicon row. Absent translations have no key in `translations`.
#[derive(Debug, Clone, PartialEq)]
pub struct LexiconEntry {
    pub ciluba: String,
    pub french: String,
    pub score: f64,
    pub sentiment: SentimentClass,
    pub nature: PartOfSpeech,
    pub translations: BTreeMap<Language, String>,
}

impl LexiconEntry {
    /// The entry's word in any lexicon column.
    pub fn word(&self, lang: Language) -> Option<&str> {
        match lang {
            Language::Ciluba => Some(self.ciluba.as_str()),
            Language::French => Some(self.french.as_str()),
            other => self.translations.get(&other).map(String::as_str),
        }
        .filter(|w| !w.is_empty())
    }

    pub fn set_word(&mut self, lang: Language, word: Option<String>) {
        match lang {
            Language::Ciluba => self.ciluba = word.unwrap_or_default(),
            Language::French => self.french = word.unwrap_or_default(),
            other => match word.filter(|w| !w.is_empty()) {
                Some(w) => {
                    self.translations.insert(other, w);
                }
                None => {
                    self.translations.remove(&other);
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowWarning {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub input_rows: usize,
    pub duplicates_removed: usize,
    pub whitespace_fixes: usize,
    pub warnings: Vec<RowWarning>,
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("lexicon file is empty")]
    Empty,
    #[error("lexicon header is missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("malformed lexicon CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("{}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

const REQUIRED: [&str; 5] = ["CILUBA", "French", "Score", "Sentiment", "Nature"];

/// Canonical header, in write order.
pub fn canonical_header() -> Vec<&'static str> {
    let mut header = vec!["CILUBA", "French", "Score", "Sentiment", "Nature"];
    header.extend(Language::TRANSLATIONS.iter().map(|l| l.column()));
    header
}

/// Parses a lexicon CSV. Rows that fail validation are skipped and reported;
/// sign inconsistencies between score and class are reported but kept.
pub fn parse_lexicon(bytes: &[u8]) -> Result<(Vec<LexiconEntry>, Vec<RowWarning>), LexiconError> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(LexiconError::Empty);
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));

    let mut required = [0usize; 5];
    for (slot, name) in required.iter_mut().zip(REQUIRED) {
        *slot = find(name).ok_or(LexiconError::MissingColumn(name))?;
    }
    let [ciluba_col, french_col, score_col, sentiment_col, nature_col] = required;
    let translation_cols: Vec<(Language, usize)> = Language::TRANSLATIONS
        .iter()
        .filter_map(|&l| find(l.column()).map(|i| (l, i)))
        .collect();

    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                warnings.push(RowWarning { row, message: format!("unreadable row: {e}") });
                continue;
            }
        };
        let cell = |idx: usize| record.get(idx).unwrap_or("");

        let raw_score = cell(score_col).trim();
        let score = match raw_score.parse::<f64>() {
            Ok(s) if s.is_finite() => s,
            _ => {
                warnings.push(RowWarning { row, message: format!("unparseable score `{raw_score}`") });
                continue;
            }
        };
        if !(SCORE_MIN..=SCORE_MAX).contains(&score) {
            warnings.push(RowWarning { row, message: format!("score out of range: {raw_score}") });
            continue;
        }
        let Some(sentiment) = SentimentClass::from_lexicon_label(cell(sentiment_col)) else {
            warnings.push(RowWarning {
                row,
                message: format!("unknown sentiment label `{}`", cell(sentiment_col)),
            });
            continue;
        };
        if !sentiment.agrees_with(score) {
            warnings.push(RowWarning {
                row,
                message: format!("sentiment {sentiment} inconsistent with score {}", format_score(score)),
            });
        }

        let translations = translation_cols
            .iter()
            .filter(|(_, idx)| !cell(*idx).is_empty())
            .map(|&(lang, idx)| (lang, cell(idx).to_string()))
            .collect();
        entries.push(LexiconEntry {
            ciluba: cell(ciluba_col).to_string(),
            french: cell(french_col).to_string(),
            score,
            sentiment,
            nature: PartOfSpeech::parse(cell(nature_col)),
            translations,
        });
    }
    Ok((entries, warnings))
}

pub fn read_lexicon(path: &Path) -> Result<(Vec<LexiconEntry>, Vec<RowWarning>), LexiconError> {
    let bytes = std::fs::read(path).map_err(|source| LexiconError::Io { path: path.to_path_buf(), source })?;
    parse_lexicon(&bytes)
}

/// Canonical score text: one decimal when the value is integral, shortest
/// round-trip decimal otherwise.
pub fn format_score(score: f64) -> String {
    if score.fract() == 0.0 {
        format!("{score:.1}")
    } else {
        format!("{score}")
    }
}

pub fn write_lexicon_to<W: Write>(entries: &[LexiconEntry], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(canonical_header())?;
    for e in entries {
        let mut record = vec![
            e.ciluba.clone(),
            e.french.clone(),
            format_score(e.score),
            e.sentiment.lexicon_label().to_string(),
            e.nature.to_string(),
        ];
        record.extend(
            Language::TRANSLATIONS
                .iter()
                .map(|l| e.translations.get(l).cloned().unwrap_or_default()),
        );
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_lexicon(entries: &[LexiconEntry], path: &Path) -> Result<(), LexiconError> {
    let io_err = |source| LexiconError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    write_lexicon_to(entries, BufWriter::new(file)).map_err(|e| {
        if !e.is_io_error() {
            return LexiconError::Csv(e);
        }
        match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(source),
            _ => unreachable!("checked is_io_error"),
        }
    })
}

/// Trims and collapses internal whitespace runs to one ASCII space.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalize_field(field: &mut String, fixes: &mut usize) {
    let normalized = collapse_whitespace(field);
    if normalized != *field {
        *fixes += 1;
        *field = normalized;
    }
}

#[derive(PartialEq, Eq, Hash)]
struct RowKey {
    ciluba: String,
    french: String,
    score: u64,
    sentiment: SentimentClass,
    nature: PartOfSpeech,
    translations: Vec<(Language, String)>,
}

impl From<&LexiconEntry> for RowKey {
    fn from(e: &LexiconEntry) -> Self {
        // -0.0 and 0.0 are the same score
        let score = if e.score == 0.0 { 0.0f64 } else { e.score };
        RowKey {
            ciluba: e.ciluba.clone(),
            french: e.french.clone(),
            score: score.to_bits(),
            sentiment: e.sentiment,
            nature: e.nature.clone(),
            translations: e.translations.iter().map(|(l, w)| (*l, w.clone())).collect(),
        }
    }
}

/// Normalizes whitespace in every text field and drops rows that become exact
/// duplicates of an earlier row. Order of the surviving rows is preserved.
pub fn clean_lexicon(entries: &[LexiconEntry]) -> (Vec<LexiconEntry>, CleanReport) {
    let mut report = CleanReport { input_rows: entries.len(), ..Default::default() };
    let mut seen: HashMap<RowKey, usize> = HashMap::new();
    let mut kept = Vec::with_capacity(entries.len());

    for (i, entry) in entries.iter().enumerate() {
        let mut e = entry.clone();
        normalize_field(&mut e.ciluba, &mut report.whitespace_fixes);
        normalize_field(&mut e.french, &mut report.whitespace_fixes);
        let mut translations = BTreeMap::new();
        for (lang, mut word) in std::mem::take(&mut e.translations) {
            normalize_field(&mut word, &mut report.whitespace_fixes);
            if !word.is_empty() {
                translations.insert(lang, word);
            }
        }
        e.translations = translations;

        match seen.entry(RowKey::from(&e)) {
            std::collections::hash_map::Entry::Occupied(first) => {
                report.duplicates_removed += 1;
                report.warnings.push(RowWarning {
                    row: i + 1,
                    message: format!("duplicate of row {}", first.get() + 1),
                });
            }
            std::collections::hash_map::Entry::Vacant(slot) => {
                slot.insert(i);
                kept.push(e);
            }
        }
    }
    (kept, report)
}

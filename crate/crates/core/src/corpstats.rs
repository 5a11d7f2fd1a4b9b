//! Corpus statistics over sentiment-labeled sentences: per-class token
//! frequencies, smoothed PMI toward the positive and negative classes, and
//! sentence-level co-occurrence pairs with a log-odds association score.
//!
//! All logarithms are base 2. Counting is occurrence-based: a token repeated
//! in a sentence counts once per occurrence. Pair counting is presence-based:
//! an unordered pair of distinct tokens counts once per sentence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lexmodel::SentimentClass;
use crate::senti::LabeledSentence;
use crate::textnorm::tokenize;

pub const DEFAULT_PMI_ALPHA: f64 = 0.5;
pub const DEFAULT_ASSOCIATION_ALPHA: f64 = 1e-6;
pub const DEFAULT_ASSOCIATION_STRENGTH: f64 = 0.5;
pub const DEFAULT_DEAD_ZONE: f64 = 0.2;

const CLASSES: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("smoothing alpha must be positive, got {0}")]
    Alpha(f64),
    #[error("no tokens to compute PMI over")]
    NoTokens,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub pos: u64,
    pub neg: u64,
    pub neu: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.pos + self.neg + self.neu
    }

    pub fn get(&self, class: SentimentClass) -> u64 {
        match class {
            SentimentClass::Positive => self.pos,
            SentimentClass::Negative => self.neg,
            SentimentClass::Neutral => self.neu,
        }
    }

    pub fn add(&mut self, class: SentimentClass, n: u64) {
        match class {
            SentimentClass::Positive => self.pos += n,
            SentimentClass::Negative => self.neg += n,
            SentimentClass::Neutral => self.neu += n,
        }
    }

    pub fn merge(&mut self, other: &ClassCounts) {
        self.pos += other.pos;
        self.neg += other.neg;
        self.neu += other.neu;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiRecord {
    pub token: String,
    pub counts: ClassCounts,
    pub pmi_pos: f64,
    pub pmi_neg: f64,
    pub pmi_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceRecord {
    pub token: String,
    pub co_token: String,
    pub counts: ClassCounts,
    pub total: u64,
    pub pos_ratio: f64,
    pub neg_ratio: f64,
    pub dominant: SentimentClass,
    pub association: f64,
}

fn merge_maps<K: Ord>(mut a: BTreeMap<K, ClassCounts>, b: BTreeMap<K, ClassCounts>) -> BTreeMap<K, ClassCounts> {
    if a.len() < b.len() {
        return merge_maps(b, a);
    }
    for (k, v) in b {
        a.entry(k).or_default().merge(&v);
    }
    a
}

/// Per-class occurrence counts of every token. Sentences without a label are
/// ignored; text is expected to be normalized already.
pub fn count_class_frequencies(corpus: &[LabeledSentence]) -> BTreeMap<String, ClassCounts> {
    corpus
        .par_iter()
        .filter_map(|s| s.label.map(|l| (s, l)))
        .fold(BTreeMap::new, |mut acc: BTreeMap<String, ClassCounts>, (s, label)| {
            for token in tokenize(&s.text) {
                acc.entry(token).or_default().add(label, 1);
            }
            acc
        })
        .reduce(BTreeMap::new, merge_maps)
}

/// Additively smoothed PMI of every token with the positive and negative
/// classes:
///
/// `PMI(w, c) = log2(P(w, c) / (P(w) P(c)))` with `P(w, c) = (n(w,c) + a) / Z`,
/// `P(w) = (n(w) + 3a) / Z`, `P(c) = (n(c) + aV) / Z` and `Z = N + 3aV`,
/// where `V` is the vocabulary size and `N` the total occurrence count.
/// Records come back in token order.
pub fn compute_pmi(freqs: &BTreeMap<String, ClassCounts>, alpha: f64) -> Result<Vec<PmiRecord>, StatsError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(StatsError::Alpha(alpha));
    }
    if freqs.is_empty() {
        return Err(StatsError::NoTokens);
    }
    let mut class_totals = ClassCounts::default();
    for c in freqs.values() {
        class_totals.merge(c);
    }
    let vocab = freqs.len() as f64;
    let n = class_totals.total() as f64;
    let z = n + alpha * CLASSES * vocab;
    let p_pos = (class_totals.pos as f64 + alpha * vocab) / z;
    let p_neg = (class_totals.neg as f64 + alpha * vocab) / z;

    Ok(freqs
        .iter()
        .map(|(token, counts)| {
            let p_w = (counts.total() as f64 + alpha * CLASSES) / z;
            let pmi = |n_wc: u64, p_c: f64| ((n_wc as f64 + alpha) / z / (p_w * p_c)).log2();
            let pmi_pos = pmi(counts.pos, p_pos);
            let pmi_neg = pmi(counts.neg, p_neg);
            PmiRecord { token: token.clone(), counts: *counts, pmi_pos, pmi_neg, pmi_diff: pmi_pos - pmi_neg }
        })
        .collect())
}

/// Sorts by `pmi_diff` descending, ties by token ascending.
pub fn rank_by_pmi_diff(mut records: Vec<PmiRecord>) -> Vec<PmiRecord> {
    records.sort_by(|a, b| b.pmi_diff.total_cmp(&a.pmi_diff).then_with(|| a.token.cmp(&b.token)));
    records
}

/// `log2((c_pos + alpha) / (c_neg + alpha))`.
pub fn association_score(c_pos: u64, c_neg: u64, alpha: f64) -> Result<f64, StatsError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(StatsError::Alpha(alpha));
    }
    Ok(((c_pos as f64 + alpha) / (c_neg as f64 + alpha)).log2())
}

/// Per-sentence counts of every unordered pair of distinct tokens, keyed
/// `(smaller, larger)`.
pub fn pair_counts(corpus: &[LabeledSentence]) -> HashMap<(String, String), ClassCounts> {
    let mut pairs: HashMap<(String, String), ClassCounts> = HashMap::new();
    for s in corpus {
        let Some(label) = s.label else { continue };
        let tokens: Vec<String> = tokenize(&s.text).into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        for (i, a) in tokens.iter().enumerate() {
            for b in &tokens[i + 1..] {
                pairs.entry((a.clone(), b.clone())).or_default().add(label, 1);
            }
        }
    }
    pairs
}

pub fn cooccurrence_pairs(corpus: &[LabeledSentence]) -> Vec<CooccurrenceRecord> {
    cooccurrence_pairs_with_alpha(corpus, DEFAULT_ASSOCIATION_ALPHA).expect("default alpha is positive")
}

/// One record per token that has any partner: its strongest partner by pair
/// total (ties to the smallest partner). Records are in token order.
pub fn cooccurrence_pairs_with_alpha(corpus: &[LabeledSentence], alpha: f64) -> Result<Vec<CooccurrenceRecord>, StatsError> {
    association_score(0, 0, alpha)?;
    let pairs = pair_counts(corpus);

    let mut best: BTreeMap<&str, (&str, ClassCounts)> = BTreeMap::new();
    for ((a, b), counts) in &pairs {
        for (token, partner) in [(a.as_str(), b.as_str()), (b.as_str(), a.as_str())] {
            match best.get(token) {
                Some((cur, cur_counts))
                    if (cur_counts.total(), std::cmp::Reverse(*cur)) >= (counts.total(), std::cmp::Reverse(partner)) => {}
                _ => {
                    best.insert(token, (partner, *counts));
                }
            }
        }
    }

    best.into_iter()
        .map(|(token, (partner, counts))| {
            let total = counts.total();
            let dominant = match counts.pos.cmp(&counts.neg) {
                std::cmp::Ordering::Greater => SentimentClass::Positive,
                std::cmp::Ordering::Less => SentimentClass::Negative,
                std::cmp::Ordering::Equal => SentimentClass::Neutral,
            };
            Ok(CooccurrenceRecord {
                token: token.to_string(),
                co_token: partner.to_string(),
                counts,
                total,
                pos_ratio: counts.pos as f64 / total as f64,
                neg_ratio: counts.neg as f64 / total as f64,
                dominant,
                association: association_score(counts.pos, counts.neg, alpha)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeParams {
    /// Minimum |association| for the co-occurrence verdict to override PMI.
    pub strength: f64,
    /// |pmi_diff| below this is Neutral.
    pub dead_zone: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        MergeParams { strength: DEFAULT_ASSOCIATION_STRENGTH, dead_zone: DEFAULT_DEAD_ZONE }
    }
}

/// A row of the sentiment-weighted lexicon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRow {
    pub pmi: PmiRecord,
    pub partner: Option<CooccurrenceRecord>,
    pub final_label: SentimentClass,
}

/// One row per PMI token. The final label is the co-occurrence dominant class
/// when the token's strongest pair is associated strongly enough, otherwise
/// the sign of `pmi_diff` with a neutral dead zone.
pub fn merge_lexicon(pmi: &[PmiRecord], cooc: &[CooccurrenceRecord], params: MergeParams) -> Vec<MergedRow> {
    let partners: HashMap<&str, &CooccurrenceRecord> = cooc.iter().map(|c| (c.token.as_str(), c)).collect();
    pmi.iter()
        .map(|p| {
            let partner = partners.get(p.token.as_str()).map(|c| (*c).clone());
            let final_label = match &partner {
                Some(c) if c.association.abs() >= params.strength => c.dominant,
                _ => SentimentClass::from_sign(p.pmi_diff, params.dead_zone),
            };
            MergedRow { pmi: p.clone(), partner, final_label }
        })
        .collect()
}

fn real(x: f64) -> String {
    format!("{x:.6}")
}

pub const PMI_HEADER: [&str; 7] = ["token", "count_pos", "count_neg", "count_neu", "pmi_pos", "pmi_neg", "pmi_diff"];

pub const COOCCURRENCE_HEADER: [&str; 10] = [
    "Tokens",
    "Co-occur",
    "Negative",
    "Neutral",
    "Positive",
    "Total",
    "Positive Ratio",
    "Negative Ratio",
    "Dominant",
    "Association",
];

pub fn write_pmi_csv<W: Write>(records: &[PmiRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PMI_HEADER)?;
    for r in records {
        w.write_record([
            r.token.clone(),
            r.counts.pos.to_string(),
            r.counts.neg.to_string(),
            r.counts.neu.to_string(),
            real(r.pmi_pos),
            real(r.pmi_neg),
            real(r.pmi_diff),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cooccurrence_fields(c: &CooccurrenceRecord) -> [String; 9] {
    [
        c.co_token.clone(),
        c.counts.neg.to_string(),
        c.counts.neu.to_string(),
        c.counts.pos.to_string(),
        c.total.to_string(),
        real(c.pos_ratio),
        real(c.neg_ratio),
        c.dominant.short().to_string(),
        real(c.association),
    ]
}

pub fn write_cooccurrence_csv<W: Write>(records: &[CooccurrenceRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COOCCURRENCE_HEADER)?;
    for c in records {
        let mut row = vec![c.token.clone()];
        row.extend(cooccurrence_fields(c));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// The co-occurrence columns framed by PMI fields and the final label.
pub fn merged_header() -> Vec<&'static str> {
    let mut h = vec!["Tokens", "PMI_Pos", "PMI_Neg", "PMI_Diff"];
    h.extend_from_slice(&COOCCURRENCE_HEADER[1..]);
    h.push("Final Label");
    h
}

pub fn write_merged_csv<W: Write>(rows: &[MergedRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(merged_header())?;
    for r in rows {
        let mut row = vec![r.pmi.token.clone(), real(r.pmi.pmi_pos), real(r.pmi.pmi_neg), real(r.pmi.pmi_diff)];
        match &r.partner {
            Some(c) => row.extend(cooccurrence_fields(c)),
            None => row.extend(std::iter::repeat_n(String::new(), 9)),
        }
        row.push(r.final_label.short().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

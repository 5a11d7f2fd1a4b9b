//! Sentiment lexicon expansion for low-resource languages.
//!
//! The crate covers three stages: corpus statistics (PMI and sentence-level
//! co-occurrence), cross-lingual lexicon expansion through a pivot language,
//! and reassignment of entries whose lexicon polarity disagrees with the
//! corpus. Supporting modules provide text normalization, a lexicon-based
//! sentence scorer, evaluation metrics and a stacking meta-learner.

pub mod corpstats;
pub mod evalstack;
pub mod language;
pub mod lexmodel;
pub mod refine;
pub mod senti;
pub mod textnorm;
pub mod xclients;

pub use language::Language;
pub use lexmodel::{LexiconEntry, SentimentClass};
pub use senti::LabeledSentence;

//! Language codes used across lexicon columns, corpora and vocabularies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Language {
    Ciluba,
    French,
    English,
    Zulu,
    Afrikaans,
    Sepedi,
    Xhosa,
    Shona,
}

impl Language {
    pub const ALL: [Language; 8] = [
        Language::Ciluba,
        Language::French,
        Language::English,
        Language::Zulu,
        Language::Afrikaans,
        Language::Sepedi,
        Language::Xhosa,
        Language::Shona,
    ];

    /// Languages stored in the translation columns of a lexicon, in column order.
    pub const TRANSLATIONS: [Language; 6] = [
        Language::English,
        Language::Zulu,
        Language::Afrikaans,
        Language::Sepedi,
        Language::Xhosa,
        Language::Shona,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Language::Ciluba => "lua",
            Language::French => "fr",
            Language::English => "en",
            Language::Zulu => "zu",
            Language::Afrikaans => "af",
            Language::Sepedi => "nso",
            Language::Xhosa => "xh",
            Language::Shona => "sn",
        }
    }

    /// Header used for this language in the lexicon CSV.
    pub fn column(self) -> &'static str {
        match self {
            Language::Ciluba => "CILUBA",
            Language::French => "French",
            Language::English => "English",
            Language::Zulu => "Zulu",
            Language::Afrikaans => "Afrikaans",
            Language::Sepedi => "Sepedi",
            Language::Xhosa => "Xhosa",
            Language::Shona => "Shona",
        }
    }

    pub fn is_translation(self) -> bool {
        !matches!(self, Language::Ciluba | Language::French)
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown language code `{0}`")]
pub struct UnknownLanguage(pub String);

impl FromStr for Language {
    type Err = UnknownLanguage;

    /// Accepts the ISO code or the lexicon column name, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let needle = s.trim();
        Language::ALL
            .into_iter()
            .find(|l| l.code().eq_ignore_ascii_case(needle) || l.column().eq_ignore_ascii_case(needle))
            .ok_or_else(|| UnknownLanguage(s.to_string()))
    }
}

impl Serialize for Language {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Language {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

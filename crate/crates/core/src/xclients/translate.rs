use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{TranslationRequest, Translator};
use crate::language::Language;
use crate::lexmodel::LexiconEntry;

/// Per-language count of (entry, language) cells left untranslated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingReport {
    pub missing: BTreeMap<Language, usize>,
}

impl MissingReport {
    pub fn with_languages(langs: &[Language]) -> Self {
        MissingReport { missing: langs.iter().map(|&l| (l, 0)).collect() }
    }

    pub fn record(&mut self, lang: Language) {
        *self.missing.entry(lang).or_default() += 1;
    }

    pub fn get(&self, lang: Language) -> usize {
        self.missing.get(&lang).copied().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["language", "missing"])?;
        for (lang, n) in &self.missing {
            w.write_record([lang.code().to_string(), n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn step(client: &dyn Translator, text: &str, source: Language, target: Language) -> Option<String> {
    if source == target {
        return Some(text.to_string());
    }
    let req = TranslationRequest::new(text, source, target).ok()?;
    // transport failures that survive the client's retries count as missing
    client.translate(&req).ok().flatten()
}

fn two_step(client: &dyn Translator, text: &str, source: Language, pivot: Language, target: Language) -> Option<String> {
    let pivot_text = step(client, text, source, pivot)?;
    step(client, &pivot_text, pivot, target)
}

/// Translates `text` from `source` to `target` through `pivot`. When no
/// translation can be obtained the miss is tallied against `target`.
pub fn translate_two_step(
    text: &str,
    source: Language,
    pivot: Language,
    target: Language,
    client: &dyn Translator,
    missing: &mut MissingReport,
) -> Option<String> {
    let out = two_step(client, text, source, pivot, target);
    if out.is_none() {
        missing.record(target);
    }
    out
}

/// Fills every absent `targets` column of every entry by two-step translation
/// of its `source` word. An entry's existing pivot-language word is used as
/// the intermediate text when present. Entry order is preserved.
pub fn expand_lexicon(
    entries: &[LexiconEntry],
    source: Language,
    pivot: Language,
    targets: &[Language],
    client: &dyn Translator,
) -> (Vec<LexiconEntry>, MissingReport) {
    let results: Vec<(LexiconEntry, Vec<Language>)> = entries
        .par_iter()
        .map(|entry| {
            let mut e = entry.clone();
            let mut misses = Vec::new();
            let pivot_text = match e.word(pivot) {
                Some(w) => Some(w.to_string()),
                None => e.word(source).and_then(|w| step(client, w, source, pivot)),
            };
            for &target in targets {
                if e.word(target).is_some() {
                    continue;
                }
                let translated = pivot_text.as_deref().and_then(|p| step(client, p, pivot, target));
                match translated {
                    Some(t) => e.set_word(target, Some(t)),
                    None => misses.push(target),
                }
            }
            (e, misses)
        })
        .collect();

    let mut report = MissingReport::with_languages(targets);
    let expanded = results
        .into_iter()
        .map(|(e, misses)| {
            misses.into_iter().for_each(|l| report.record(l));
            e
        })
        .collect();
    (expanded, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xclients::mock::{DictionaryTranslator, IdentityTranslator};
    use crate::xclients::{Guarded, ResponseCache, RetryPolicy};

    fn dict() -> DictionaryTranslator {
        let mut d = DictionaryTranslator::new();
        d.insert(Language::French, Language::English, "parle", "speak");
        d.insert(Language::English, Language::Zulu, "speak", "khuluma");
        d
    }

    #[test]
    fn two_step_composes() {
        let mut missing = MissingReport::default();
        let d = dict();
        let out = translate_two_step("parle", Language::French, Language::English, Language::Zulu, &d, &mut missing);
        assert_eq!(out.as_deref(), Some("khuluma"));
        assert_eq!(d.probe().calls(), 2);
        assert_eq!(missing.get(Language::Zulu), 0);
    }

    #[test]
    fn absent_translation_is_counted_missing() {
        let mut missing = MissingReport::default();
        let out = translate_two_step("parle", Language::French, Language::English, Language::Shona, &dict(), &mut missing);
        assert_eq!(out, None);
        assert_eq!(missing.get(Language::Shona), 1);
    }

    #[test]
    fn warm_cache_makes_no_calls() {
        let cache = ResponseCache::in_memory();
        for (text, s, t, out) in [
            ("parle", Language::French, Language::English, "speak"),
            ("speak", Language::English, Language::Zulu, "khuluma"),
        ] {
            let req = TranslationRequest::new(text, s, t).unwrap();
            let _: Option<String> = cache.get_or_try(&req, || Ok(Some(out.to_string()))).unwrap();
        }
        let client = Guarded::new(dict(), RetryPolicy::immediate(3), 4, cache);
        let mut missing = MissingReport::default();
        let out = translate_two_step("parle", Language::French, Language::English, Language::Zulu, &client, &mut missing);
        assert_eq!(out.as_deref(), Some("khuluma"));
        assert_eq!(client.inner().probe().calls(), 0);
    }

    #[test]
    fn exhausted_retries_become_missing() {
        let client = Guarded::new(dict().with_transport_failures(3), RetryPolicy::immediate(3), 1, ResponseCache::in_memory());
        let mut missing = MissingReport::default();
        let out = translate_two_step("parle", Language::French, Language::English, Language::Zulu, &client, &mut missing);
        assert_eq!(out, None);
        assert_eq!(missing.get(Language::Zulu), 1);
        assert_eq!(client.inner().probe().calls(), 3);

        let client = Guarded::new(dict().with_transport_failures(2), RetryPolicy::immediate(3), 1, ResponseCache::in_memory());
        let out = translate_two_step("parle", Language::French, Language::English, Language::Zulu, &client, &mut missing);
        assert_eq!(out.as_deref(), Some("khuluma"));
    }

    #[test]
    fn identity_translation_is_identity() {
        let mut missing = MissingReport::default();
        let out = translate_two_step("Akula", Language::French, Language::English, Language::Xhosa, &IdentityTranslator::default(), &mut missing);
        assert_eq!(out.as_deref(), Some("Akula"));
    }

    #[test]
    fn missing_csv() {
        let mut m = MissingReport::with_languages(&[Language::Zulu, Language::Shona]);
        m.record(Language::Shona);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "language,missing\nzu,0\nsn,1\n");
    }
}

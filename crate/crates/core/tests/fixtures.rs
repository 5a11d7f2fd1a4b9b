use std::collections::BTreeMap;
use std::time::Duration;

use trilex::corpstats::{compute_pmi, cooccurrence_pairs, count_class_frequencies, DEFAULT_PMI_ALPHA};
use trilex::lexmodel::PartOfSpeech;
use trilex::refine::{apply_refinements, detect_mismatches, Evidence, FixedClock, PolarityParams};
use trilex::textnorm::{correct_tokens, CorrectionStatus, Vocabularies};
use trilex::xclients::mock::{CallProbe, DictionaryTranslator, RuleRefiner};
use trilex::xclients::{expand_lexicon, translate_two_step, Guarded, MissingReport, ResponseCache, RetryPolicy};
use trilex::{Language, LabeledSentence, LexiconEntry, SentimentClass};

fn entry(ciluba: &str, zulu: &str, score: f64) -> LexiconEntry {
    LexiconEntry {
        ciluba: ciluba.into(),
        french: ciluba.into(),
        score,
        sentiment: SentimentClass::from_sign(score, 0.0),
        nature: PartOfSpeech::Word,
        translations: BTreeMap::from([(Language::Zulu, zulu.to_string())]),
    }
}

#[test]
fn zulu_correction_count_is_exact() {
    let vocab: Vec<String> = (0..200).map(|i| format!("zulu{i:06}")).collect();
    let mut tokens: Vec<(Language, String)> = Vec::new();
    // one appended letter on a 10-char word: similarity 10/11 >= 0.90
    for i in 0..1188 {
        let suffix = ['a', 'b', 'c', 'd', 'e', 'f'][i / 200];
        tokens.push((Language::Zulu, format!("{}{suffix}", vocab[i % 200])));
    }
    for i in 0..40 {
        tokens.push((Language::Zulu, format!("qx{i}")));
    }
    for w in vocab.iter().take(25) {
        tokens.push((Language::Zulu, w.clone()));
    }
    let vocabularies = Vocabularies::from([(Language::Zulu, vocab.iter().cloned().collect())]);

    let (records, report) = correct_tokens(&tokens, &vocabularies, 0.90).unwrap();
    let zu = report.per_language[&Language::Zulu];
    assert_eq!(zu.auto_corrections, 1188);
    assert_eq!(zu.flagged, 40);
    assert_eq!(records.len(), tokens.len());
    for (r, (_, t)) in records.iter().zip(&tokens) {
        assert_eq!(&r.original, t);
        if r.status == CorrectionStatus::AutoCorrected {
            let c = r.corrected.as_ref().unwrap();
            assert!(vocabularies[&Language::Zulu].contains(c));
            assert!(r.similarity >= 0.90);
        }
    }
}

#[test]
fn concurrent_calls_respect_in_flight_bound() {
    let lexicon: Vec<LexiconEntry> = (0..48)
        .map(|i| LexiconEntry {
            ciluba: format!("c{i}"),
            french: format!("f{i}"),
            score: 1.0,
            sentiment: SentimentClass::Positive,
            nature: PartOfSpeech::Word,
            translations: BTreeMap::new(),
        })
        .collect();
    let dict = || {
        let mut d = DictionaryTranslator::new().with_probe(CallProbe::with_latency(Duration::from_millis(3)));
        for i in 0..48 {
            d.insert(Language::French, Language::English, &format!("f{i}"), &format!("e{i}"));
            d.insert(Language::English, Language::Zulu, &format!("e{i}"), &format!("z{i}"));
        }
        d
    };
    for limit in [1, 3] {
        let client = Guarded::new(dict(), RetryPolicy::immediate(3), limit, ResponseCache::in_memory());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let (expanded, missing) =
            pool.install(|| expand_lexicon(&lexicon, Language::French, Language::English, &[Language::Zulu], &client));
        assert_eq!(missing.get(Language::Zulu), 0);
        assert_eq!(expanded[7].word(Language::Zulu), Some("z7"));
        let probe = client.inner().probe();
        assert_eq!(probe.calls(), 96);
        assert!(probe.peak_in_flight() <= limit, "peak {} > {limit}", probe.peak_in_flight());
    }
}

#[test]
fn two_step_with_warm_cache_makes_no_calls() {
    let dict = || {
        let mut d = DictionaryTranslator::new();
        d.insert(Language::French, Language::English, "parle", "speak");
        d.insert(Language::English, Language::Zulu, "speak", "khuluma");
        d
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    {
        let client = Guarded::new(dict(), RetryPolicy::immediate(3), 4, ResponseCache::open(&path).unwrap());
        let mut missing = MissingReport::default();
        let out = translate_two_step("parle", Language::French, Language::English, Language::Zulu, &client, &mut missing);
        assert_eq!(out.as_deref(), Some("khuluma"));
        assert_eq!(client.inner().probe().calls(), 2);
    }
    let client = Guarded::new(dict(), RetryPolicy::immediate(3), 4, ResponseCache::open(&path).unwrap());
    let mut missing = MissingReport::default();
    let out = translate_two_step("parle", Language::French, Language::English, Language::Zulu, &client, &mut missing);
    assert_eq!(out.as_deref(), Some("khuluma"));
    assert_eq!(client.inner().probe().calls(), 0);
}

#[test]
fn refinement_reaches_a_fixed_point() {
    let mut corpus = Vec::new();
    let mut push = |text: &str, label: SentimentClass, times: usize| {
        for _ in 0..times {
            let id = corpus.len().to_string();
            corpus.push(LabeledSentence::new(id, text, Language::Zulu, Some(label)));
        }
    };
    push("ukufa kubi", SentimentClass::Negative, 6);
    push("muhle kakhulu", SentimentClass::Positive, 6);
    push("inja ihamba", SentimentClass::Neutral, 4);
    push("ukufa ihamba", SentimentClass::Positive, 1);
    push("amanzi apholile", SentimentClass::Positive, 5);

    let lexicon = vec![
        entry("a", "ukufa", 4.0),   // corpus says negative
        entry("b", "muhle", 8.0),   // agrees
        entry("c", "inja", -3.0),   // corpus leans neutral or positive
        entry("d", "kubi", -5.0),   // agrees
        entry("e", "Muhle", -2.0),  // homograph row, disagrees after normalization
        entry("f", "absent", 2.0),  // not in corpus
        entry("g", "amanzi", -1.0), // corpus says positive
    ];
    let pmi = compute_pmi(&count_class_frequencies(&corpus), DEFAULT_PMI_ALPHA).unwrap();
    let cooc = cooccurrence_pairs(&corpus);
    let params = PolarityParams::default();

    let mismatches = detect_mismatches(&lexicon, &pmi, Language::Zulu, params);
    assert!(mismatches.len() >= 3, "{mismatches:?}");
    let evidence = Evidence::new(&pmi, &cooc, &corpus);
    let refiner = RuleRefiner::new(params.theta);
    let (updated, audit) = apply_refinements(&mismatches, &refiner, &lexicon, &evidence, &FixedClock(0));

    assert_eq!(audit.len(), mismatches.len());
    let changed = lexicon.iter().zip(&updated).filter(|(a, b)| a != b).count();
    assert_eq!(audit.successes(), changed);
    let flagged: Vec<usize> = mismatches.iter().map(|m| m.row).collect();
    for (i, (before, after)) in lexicon.iter().zip(&updated).enumerate() {
        if !flagged.contains(&i) {
            assert_eq!(before.score.to_bits(), after.score.to_bits());
            assert_eq!(before, after);
        }
    }
    assert!(detect_mismatches(&updated, &pmi, Language::Zulu, params).is_empty());

    // same verdicts again change nothing
    let (again, _) = apply_refinements(&mismatches, &refiner, &updated, &evidence, &FixedClock(0));
    assert_eq!(again, updated);
}

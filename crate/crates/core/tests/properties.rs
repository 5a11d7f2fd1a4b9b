use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use trilex::corpstats::{
    association_score, compute_pmi, cooccurrence_pairs, count_class_frequencies, rank_by_pmi_diff, DEFAULT_PMI_ALPHA,
};
use trilex::evalstack::{confusion_and_metrics, loss_and_gradient, split_dataset, ProbRow};
use trilex::lexmodel::{clean_lexicon, parse_lexicon, write_lexicon_to, PartOfSpeech};
use trilex::senti::{distribution_report, label_from_score, LexiconScorer};
use trilex::textnorm::{normalize_text, similarity, tokenize, NormalizationConfig};
use trilex::{Language, LabeledSentence, LexiconEntry, SentimentClass};

fn class() -> impl Strategy<Value = SentimentClass> {
    prop::sample::select(SentimentClass::ORDER.to_vec())
}

fn lexicon_entry(word: impl Strategy<Value = String> + Clone) -> impl Strategy<Value = LexiconEntry> {
    let translations = prop::collection::btree_map(prop::sample::select(Language::TRANSLATIONS.to_vec()), word.clone(), 0..4);
    (word.clone(), word, -9.0f64..=9.0, class(), any::<bool>(), translations).prop_map(
        |(ciluba, french, score, sentiment, verb, translations)| LexiconEntry {
            ciluba,
            french,
            score,
            sentiment,
            nature: if verb { PartOfSpeech::Verb } else { PartOfSpeech::Word },
            translations,
        },
    )
}

fn levenshtein_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in table.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        table[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = table[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            table[i][j] = sub.min(table[i - 1][j] + 1).min(table[i][j - 1] + 1);
        }
    }
    table[a.len()][b.len()]
}

fn sentence_strategy(max_sentences: usize) -> impl Strategy<Value = Vec<LabeledSentence>> {
    let token = prop::sample::select(vec!["amanzi", "muhle", "bethi", "abadala", "khuluma", "inja", "ukudla", "kakhulu"]);
    let sentence = (prop::collection::vec(token, 1..7), class());
    prop::collection::vec(sentence, 1..=max_sentences).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (tokens, label))| LabeledSentence::new(i.to_string(), tokens.join(" "), Language::Zulu, Some(label)))
            .collect()
    })
}

/// Brute-force PMI straight from the sentences.
fn pmi_oracle(corpus: &[LabeledSentence], alpha: f64) -> BTreeMap<String, (f64, f64)> {
    let tokens: Vec<Vec<&str>> = corpus.iter().map(|s| s.text.split_whitespace().collect()).collect();
    let vocab: BTreeSet<&str> = tokens.iter().flatten().copied().collect();
    let v = vocab.len() as f64;
    let n: f64 = tokens.iter().map(|t| t.len() as f64).sum();
    let z = n + alpha * 3.0 * v;
    let class_total = |c: SentimentClass| -> f64 {
        corpus.iter().zip(&tokens).filter(|(s, _)| s.label == Some(c)).map(|(_, t)| t.len() as f64).sum()
    };
    let count = |w: &str, c: Option<SentimentClass>| -> f64 {
        corpus
            .iter()
            .zip(&tokens)
            .filter(|(s, _)| c.is_none() || s.label == c)
            .map(|(_, t)| t.iter().filter(|x| **x == w).count() as f64)
            .sum()
    };
    vocab
        .iter()
        .map(|&w| {
            let p_w = (count(w, None) + 3.0 * alpha) / z;
            let pmi = |c: SentimentClass| {
                let p_c = (class_total(c) + alpha * v) / z;
                let p_wc = (count(w, Some(c)) + alpha) / z;
                (p_wc / (p_w * p_c)).ln() / std::f64::consts::LN_2
            };
            (w.to_string(), (pmi(SentimentClass::Positive), pmi(SentimentClass::Negative)))
        })
        .collect()
}

/// For every token, the partner sharing the most sentences (smallest on ties)
/// with per-label sentence counts.
fn cooccurrence_oracle(corpus: &[LabeledSentence]) -> BTreeMap<String, (String, [u64; 3])> {
    let sets: Vec<BTreeSet<&str>> = corpus.iter().map(|s| s.text.split_whitespace().collect()).collect();
    let vocab: BTreeSet<&str> = sets.iter().flatten().copied().collect();
    let mut out = BTreeMap::new();
    for &t in &vocab {
        let mut best: Option<(&str, [u64; 3])> = None;
        for &u in &vocab {
            if u == t {
                continue;
            }
            let mut counts = [0u64; 3];
            for (s, set) in corpus.iter().zip(&sets) {
                if set.contains(t) && set.contains(u) {
                    counts[s.label.unwrap().index()] += 1;
                }
            }
            let total: u64 = counts.iter().sum();
            if total > 0 && best.is_none_or(|(_, b)| total > b.iter().sum()) {
                best = Some((u, counts));
            }
        }
        if let Some((u, counts)) = best {
            out.insert(t.to_string(), (u.to_string(), counts));
        }
    }
    out
}

proptest! {
    #[test]
    fn lexicon_round_trip(entries in prop::collection::vec(lexicon_entry("[a-zA-Zéû ,\"']{1,8}".prop_map(String::from)), 0..12)) {
        let mut buf = Vec::new();
        write_lexicon_to(&entries, &mut buf).unwrap();
        let (parsed, _) = parse_lexicon(&buf).unwrap();
        prop_assert_eq!(parsed, entries);
    }

    #[test]
    fn clean_is_idempotent_and_counts_add_up(
        entries in prop::collection::vec(lexicon_entry(prop::sample::select(vec!["Akula", " Akula ", "Speak  again", "Speak again", "muhle"]).prop_map(String::from)), 0..30)
    ) {
        let (once, report) = clean_lexicon(&entries);
        prop_assert_eq!(once.len() + report.duplicates_removed, entries.len());
        prop_assert_eq!(report.input_rows, entries.len());
        let (twice, second) = clean_lexicon(&once);
        prop_assert_eq!(&twice, &once);
        prop_assert_eq!(second.duplicates_removed, 0);
        prop_assert_eq!(second.whitespace_fixes, 0);
        // surviving rows keep their non-text fields and relative order
        let mut cursor = 0;
        for kept in &once {
            while !(entries[cursor].score.to_bits() == kept.score.to_bits()
                && entries[cursor].sentiment == kept.sentiment
                && entries[cursor].nature == kept.nature)
            {
                cursor += 1;
            }
            cursor += 1;
        }
    }

    #[test]
    fn normalization_is_idempotent(text in "[a-zA-ZéÉûçñ' ,.!?;:\\-\t]{0,40}") {
        let cfg = NormalizationConfig::default();
        let once = normalize_text(&text, &cfg);
        prop_assert_eq!(normalize_text(&once, &cfg), once.clone());
        for token in tokenize(&once) {
            prop_assert!(!token.is_empty());
            prop_assert!(token.chars().all(|c| c.is_alphanumeric() || c == '-' || c == '\''));
        }
    }

    #[test]
    fn similarity_matches_edit_distance(a in "[a-dé]{1,9}", b in "[a-dé]{1,9}") {
        let s = similarity(&a, &b).unwrap();
        let max = a.chars().count().max(b.chars().count()) as f64;
        let expected = 1.0 - levenshtein_oracle(&a, &b) as f64 / max;
        prop_assert!((s - expected).abs() < 1e-12);
        prop_assert_eq!(s, similarity(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s == 1.0, a == b);
    }

    #[test]
    fn pmi_matches_brute_force(corpus in sentence_strategy(50)) {
        let records = compute_pmi(&count_class_frequencies(&corpus), DEFAULT_PMI_ALPHA).unwrap();
        let oracle = pmi_oracle(&corpus, DEFAULT_PMI_ALPHA);
        prop_assert_eq!(records.len(), oracle.len());
        for r in &records {
            let (pos, neg) = oracle[&r.token];
            prop_assert!((r.pmi_pos - pos).abs() <= 1e-9);
            prop_assert!((r.pmi_neg - neg).abs() <= 1e-9);
            prop_assert_eq!(r.pmi_diff.to_bits(), (r.pmi_pos - r.pmi_neg).to_bits());
        }
        let occurrences: u64 = corpus.iter().map(|s| s.text.split_whitespace().count() as u64).sum();
        prop_assert_eq!(records.iter().map(|r| r.counts.total()).sum::<u64>(), occurrences);
    }

    #[test]
    fn ranking_agrees_with_reference_sort(corpus in sentence_strategy(20)) {
        let records = compute_pmi(&count_class_frequencies(&corpus), DEFAULT_PMI_ALPHA).unwrap();
        let mut reference: Vec<(f64, String)> = records.iter().map(|r| (r.pmi_diff, r.token.clone())).collect();
        reference.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let ranked: Vec<String> = rank_by_pmi_diff(records).into_iter().map(|r| r.token).collect();
        prop_assert_eq!(ranked, reference.into_iter().map(|(_, t)| t).collect::<Vec<_>>());
    }

    #[test]
    fn positive_sentence_never_lowers_rank(corpus in sentence_strategy(20), token in prop::sample::select(vec!["muhle", "inja", "kakhulu"])) {
        let rank_of = |c: &[LabeledSentence]| {
            let ranked = rank_by_pmi_diff(compute_pmi(&count_class_frequencies(c), DEFAULT_PMI_ALPHA).unwrap());
            ranked.iter().position(|r| r.token == token)
        };
        let mut grown = corpus.clone();
        grown.push(LabeledSentence::new("extra", token, Language::Zulu, Some(SentimentClass::Positive)));
        let after = rank_of(&grown).unwrap();
        if let Some(before) = rank_of(&corpus) {
            prop_assert!(after <= before, "rank {} -> {}", before, after);
        }
    }

    #[test]
    fn cooccurrence_matches_enumeration(corpus in sentence_strategy(25)) {
        let records = cooccurrence_pairs(&corpus);
        let oracle = cooccurrence_oracle(&corpus);
        prop_assert_eq!(records.len(), oracle.len());
        for r in &records {
            let (partner, counts) = &oracle[&r.token];
            prop_assert_eq!(&r.co_token, partner);
            prop_assert_eq!([r.counts.neg, r.counts.neu, r.counts.pos], *counts);
            prop_assert_eq!(r.total, counts.iter().sum::<u64>());
            prop_assert_eq!(r.pos_ratio, r.counts.pos as f64 / r.total as f64);
        }
    }

    #[test]
    fn association_is_antisymmetric(a in 0u64..1000, b in 0u64..1000) {
        let ab = association_score(a, b, 1e-6).unwrap();
        let ba = association_score(b, a, 1e-6).unwrap();
        prop_assert!((ab + ba).abs() < 1e-12);
    }

    #[test]
    fn scoring_ignores_token_order_and_flips_with_scores(
        scores in prop::collection::vec(-9i32..=9, 4),
        picks in prop::collection::vec(0usize..6, 1..10),
        seed in any::<u64>(),
    ) {
        let words = ["amanzi", "apholile", "muhle", "kabi", "inja", "ukudla"];
        let lexicon = |sign: f64| -> Vec<LexiconEntry> {
            scores.iter().zip(words).map(|(&s, w)| LexiconEntry {
                ciluba: w.into(),
                french: w.into(),
                score: sign * s as f64,
                sentiment: SentimentClass::from_sign(sign * s as f64, 0.0),
                nature: PartOfSpeech::Word,
                translations: BTreeMap::from([(Language::Zulu, w.to_string())]),
            }).collect()
        };
        let tokens: Vec<&str> = picks.iter().map(|&i| words[i]).collect();
        let mut shuffled = tokens.clone();
        let n = shuffled.len();
        for i in 0..n {
            shuffled.swap(i, (seed as usize).wrapping_add(i * 7919) % n);
        }
        let scorer = LexiconScorer::new(&lexicon(1.0), Language::Zulu).unwrap();
        let s = scorer.score(&tokens.join(" "));
        prop_assert!((s - scorer.score(&shuffled.join(" "))).abs() < 1e-12);

        let flipped = LexiconScorer::new(&lexicon(-1.0), Language::Zulu).unwrap();
        let label = label_from_score(s, 0.5, -0.5).unwrap();
        let flipped_label = label_from_score(flipped.score(&tokens.join(" ")), 0.5, -0.5).unwrap();
        let expected = match label {
            SentimentClass::Positive => SentimentClass::Negative,
            SentimentClass::Negative => SentimentClass::Positive,
            SentimentClass::Neutral => SentimentClass::Neutral,
        };
        prop_assert_eq!(flipped_label, expected);
    }

    #[test]
    fn distribution_percentages_invert_to_counts(labels in prop::collection::vec(class(), 1..400)) {
        let corpus: Vec<LabeledSentence> = labels.iter().enumerate()
            .map(|(i, l)| LabeledSentence::new(i.to_string(), "x", Language::Zulu, Some(*l)))
            .collect();
        let report = distribution_report(&corpus).unwrap();
        let total = report.total as f64;
        let mut sum = 0.0;
        for share in &report.classes {
            prop_assert!((share.percentage * total / 100.0 - share.count as f64).abs() <= 0.05 * total / 100.0 + 1e-9);
            sum += share.percentage;
        }
        prop_assert!((sum - 100.0).abs() <= 0.1 + 1e-9);
    }

    #[test]
    fn split_is_deterministic_and_stratified(labels in prop::collection::vec(class(), 1..200), ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let a = split_dataset(&labels, ratio, seed).unwrap();
        let b = split_dataset(&labels, ratio, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for c in SentimentClass::ORDER {
            let n = labels.iter().filter(|l| **l == c).count();
            let train = a.0.iter().filter(|l| **l == c).count();
            prop_assert_eq!(train, (ratio * n as f64).round() as usize);
        }
        prop_assert_eq!(a.0.len() + a.1.len(), labels.len());
    }

    #[test]
    fn micro_f1_is_accuracy(pairs in prop::collection::vec((class(), class()), 1..100)) {
        let (truths, preds): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let (m, r) = confusion_and_metrics(&truths, &preds).unwrap();
        prop_assert_eq!(r.f1_micro, r.accuracy);
        prop_assert_eq!(m.total() as usize, truths.len());
        for c in SentimentClass::ORDER {
            prop_assert_eq!(m.truth_count(c) as usize, truths.iter().filter(|t| **t == c).count());
        }
    }

    #[test]
    fn stacker_gradient_matches_finite_differences(
        raw in prop::collection::vec((prop::collection::vec(0.05f64..1.0, 6), class()), 3..8),
        w in prop::collection::vec(-1.0f64..1.0, 21),
        lambda in 0.0f64..0.1,
    ) {
        let rows: Vec<ProbRow> = raw.iter().enumerate().map(|(i, (p, label))| {
            let norm = |s: &[f64]| { let t: f64 = s.iter().sum(); [s[0] / t, s[1] / t, s[2] / t] };
            ProbRow { id: i.to_string(), label: Some(*label), probs: vec![norm(&p[..3]), norm(&p[3..])] }
        }).collect();
        let mut weights: Vec<Vec<f64>> = w.chunks(3).map(<[f64]>::to_vec).collect();
        let (_, grad) = loss_and_gradient(&weights, &rows, lambda).unwrap();
        let h = 1e-5;
        for i in 0..weights.len() {
            for c in 0..3 {
                let orig = weights[i][c];
                weights[i][c] = orig + h;
                let up = loss_and_gradient(&weights, &rows, lambda).unwrap().0;
                weights[i][c] = orig - h;
                let down = loss_and_gradient(&weights, &rows, lambda).unwrap().0;
                weights[i][c] = orig;
                let numeric = (up - down) / (2.0 * h);
                let err = (numeric - grad[i][c]).abs();
                prop_assert!(err <= 1e-4 * numeric.abs().max(grad[i][c].abs()) || err < 1e-8, "{} vs {}", numeric, grad[i][c]);
            }
        }
    }
}

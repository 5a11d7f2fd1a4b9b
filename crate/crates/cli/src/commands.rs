use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use trilex::corpstats::{
    compute_pmi, cooccurrence_pairs_with_alpha, count_class_frequencies, merge_lexicon, rank_by_pmi_diff,
    write_cooccurrence_csv, write_merged_csv, write_pmi_csv, CooccurrenceRecord, MergeParams, PmiRecord,
};
use trilex::evalstack::{
    confusion_and_metrics, predict_stacker, read_prob_csv, split_dataset, train_stacker, ConfusionMatrix,
    MetricsReport, StackerModel,
};
use trilex::lexmodel::{clean_lexicon, read_lexicon, write_lexicon, CleanReport, RowWarning};
use trilex::refine::{apply_refinements, detect_mismatches, Evidence, PolarityParams};
use trilex::senti::{distribution_report, label_from_score, read_corpus, write_corpus_to, LexiconScorer};
use trilex::textnorm::{
    correct_lexicon, load_vocab_dir, normalize_lexicon, write_flagged_csv, Normalizer, Vocabularies,
};
use trilex::xclients::{annotate_sentence, expand_lexicon};
use trilex::{LabeledSentence, LexiconEntry, SentimentClass};

use crate::clients::{self, TransportFactory};
use crate::config::PipelineConfig;

/// What a command reports back besides the files it wrote.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Client calls that still failed after retries.
    pub service_failures: usize,
}

impl Outcome {
    fn absorb(&mut self, other: Outcome) {
        self.service_failures += other.service_failures;
    }
}

pub struct Ctx<'a> {
    pub cfg: PipelineConfig,
    pub transport: TransportFactory<'a>,
}

impl Ctx<'_> {
    fn out(&self, explicit: Option<&Path>, name: &str) -> PathBuf {
        explicit.map(Path::to_path_buf).unwrap_or_else(|| self.cfg.output_dir().join(name))
    }

    /// A companion file placed next to the main output.
    fn beside(&self, main: &Path, name: &str) -> PathBuf {
        main.parent().map_or_else(|| PathBuf::from(name), |d| d.join(name))
    }

    fn lexicon_path(&self) -> Result<&Path> {
        self.cfg.paths.lexicon.as_deref().context("no lexicon given (--lexicon or paths.lexicon)")
    }

    fn corpus_path(&self) -> Result<&Path> {
        self.cfg.paths.corpus.as_deref().context("no corpus given (--corpus or paths.corpus)")
    }

    pub fn load_lexicon(&self) -> Result<Vec<LexiconEntry>> {
        let path = self.lexicon_path()?;
        let (entries, warnings) = read_lexicon(path)?;
        for w in &warnings {
            eprintln!("warning: {}: row {}: {}", path.display(), w.row, w.message);
        }
        Ok(entries)
    }

    pub fn vocabularies(&self) -> Result<Option<Vocabularies>> {
        match &self.cfg.paths.vocab_dir {
            Some(dir) => Ok(Some(load_vocab_dir(dir)?)),
            None => Ok(None),
        }
    }

    /// Corpus with every text normalized the way lexicon words are.
    fn load_corpus(&self, vocab: Option<&Vocabularies>) -> Result<Vec<LabeledSentence>> {
        let mut corpus = read_corpus(self.corpus_path()?)?;
        let mut normalizer = Normalizer::new(self.cfg.normalization.clone())?;
        if let Some(words) = vocab.and_then(|v| v.get(&self.cfg.languages.corpus)) {
            normalizer = normalizer.with_accent_guard(words.iter().map(String::as_str));
        }
        for s in &mut corpus {
            s.text = normalizer.normalize(&s.text);
        }
        Ok(corpus)
    }
}

fn write_file(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value)?;
        buf.push(b'\n');
        Ok(())
    })
}

fn round6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn save_lexicon(path: &Path, entries: &[LexiconEntry]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(write_lexicon(entries, path)?)
}

#[derive(Serialize)]
struct CleanSummary<'a> {
    #[serde(flatten)]
    report: &'a CleanReport,
    unique_rows: usize,
    parse_warnings: &'a [RowWarning],
}

// ---- lexicon stages ----

pub fn clean(ctx: &Ctx, out: Option<&Path>) -> Result<(Vec<LexiconEntry>, Outcome)> {
    let path = ctx.lexicon_path()?;
    let (entries, parse_warnings) = read_lexicon(path)?;
    let (cleaned, report) = clean_lexicon(&entries);
    let main = ctx.out(out, "cleaned.csv");
    save_lexicon(&main, &cleaned)?;
    let summary = CleanSummary { report: &report, unique_rows: cleaned.len(), parse_warnings: &parse_warnings };
    write_json(&ctx.beside(&main, "clean_report.json"), &summary)?;
    Ok((cleaned, Outcome::default()))
}

pub fn translate(ctx: &Ctx, lexicon: &[LexiconEntry], out: Option<&Path>) -> Result<(Vec<LexiconEntry>, Outcome)> {
    let langs = &ctx.cfg.languages;
    let client = clients::translator(&ctx.cfg, lexicon, ctx.transport)?;
    let (expanded, missing) = expand_lexicon(lexicon, langs.source, langs.pivot, &langs.targets, &client);
    let main = ctx.out(out, "expanded.csv");
    save_lexicon(&main, &expanded)?;
    write_file(&ctx.beside(&main, "missing.csv"), |buf| Ok(missing.write_csv(buf)?))?;
    Ok((expanded, Outcome { service_failures: client.failures() }))
}

pub fn normalize(
    ctx: &Ctx,
    lexicon: &[LexiconEntry],
    vocab: Option<&Vocabularies>,
    threshold: f64,
    out: Option<&Path>,
) -> Result<Vec<LexiconEntry>> {
    let normalized = normalize_lexicon(lexicon, &ctx.cfg.normalization, vocab)?;
    let main = ctx.out(out, "normalized.csv");
    let result = match vocab {
        Some(v) if !v.is_empty() => {
            let (corrected, records, report) = correct_lexicon(&normalized, v, threshold)?;
            write_file(&ctx.beside(&main, "corrections.csv"), |buf| Ok(report.write_csv(buf)?))?;
            write_file(&ctx.beside(&main, "flagged.csv"), |buf| Ok(write_flagged_csv(&records, buf)?))?;
            corrected
        }
        _ => normalized,
    };
    save_lexicon(&main, &result)?;
    Ok(result)
}

// ---- corpus statistics ----

fn annotate_missing(ctx: &Ctx, corpus: &mut [LabeledSentence], lexicon: Option<&[LexiconEntry]>) -> Result<Outcome> {
    if corpus.iter().all(|s| s.label.is_some()) {
        return Ok(Outcome::default());
    }
    let lexicon = lexicon.context("corpus has unlabeled sentences and no lexicon is available to annotate them")?;
    let client = clients::annotator(&ctx.cfg, lexicon, ctx.cfg.languages.corpus, ctx.transport)?;
    use rayon::prelude::*;
    let verdicts: Vec<Option<(SentimentClass, f64)>> = corpus
        .par_iter()
        .map(|s| match s.label {
            Some(_) => None,
            // nothing left after normalization: no evidence either way
            None if s.text.trim().is_empty() => Some((SentimentClass::Neutral, 0.0)),
            None => annotate_sentence(&s.text, &client).ok().map(|a| (a.class, a.score)),
        })
        .collect();
    for (s, v) in corpus.iter_mut().zip(verdicts) {
        if let Some((class, score)) = v {
            s.label = Some(class);
            s.score = Some(round6(score));
        }
    }
    Ok(Outcome { service_failures: client.failures() })
}

pub struct Stats {
    pub corpus: Vec<LabeledSentence>,
    pub pmi: Vec<PmiRecord>,
    pub cooc: Vec<CooccurrenceRecord>,
}

fn stats(ctx: &Ctx, vocab: Option<&Vocabularies>, lexicon: Option<&[LexiconEntry]>) -> Result<(Stats, Outcome)> {
    let mut corpus = ctx.load_corpus(vocab)?;
    let outcome = annotate_missing(ctx, &mut corpus, lexicon)?;
    let labeled: Vec<LabeledSentence> = corpus.iter().filter(|s| s.label.is_some()).cloned().collect();
    let pmi = compute_pmi(&count_class_frequencies(&labeled), ctx.cfg.smoothing.pmi_alpha)?;
    let cooc = cooccurrence_pairs_with_alpha(&labeled, ctx.cfg.smoothing.association_alpha)?;
    Ok((Stats { corpus: labeled, pmi, cooc }, outcome))
}

pub fn stats_pmi(ctx: &Ctx, out: Option<&Path>) -> Result<Outcome> {
    let vocab = ctx.vocabularies()?;
    let lexicon = ctx.cfg.paths.lexicon.as_ref().map(|_| ctx.load_lexicon()).transpose()?;
    let (s, outcome) = stats(ctx, vocab.as_ref(), lexicon.as_deref())?;
    write_file(&ctx.out(out, "pmi.csv"), |buf| Ok(write_pmi_csv(&rank_by_pmi_diff(s.pmi), buf)?))?;
    Ok(outcome)
}

pub fn stats_cooc(ctx: &Ctx, out: Option<&Path>) -> Result<Outcome> {
    let vocab = ctx.vocabularies()?;
    let lexicon = ctx.cfg.paths.lexicon.as_ref().map(|_| ctx.load_lexicon()).transpose()?;
    let (s, outcome) = stats(ctx, vocab.as_ref(), lexicon.as_deref())?;
    write_file(&ctx.out(out, "cooccurrence.csv"), |buf| Ok(write_cooccurrence_csv(&s.cooc, buf)?))?;
    Ok(outcome)
}

fn merge_params(cfg: &PipelineConfig) -> MergeParams {
    MergeParams { strength: cfg.thresholds.association_strength, dead_zone: cfg.thresholds.theta }
}

pub fn merge(ctx: &Ctx, out: Option<&Path>) -> Result<Outcome> {
    let vocab = ctx.vocabularies()?;
    let lexicon = ctx.cfg.paths.lexicon.as_ref().map(|_| ctx.load_lexicon()).transpose()?;
    let (s, outcome) = stats(ctx, vocab.as_ref(), lexicon.as_deref())?;
    let merged = merge_lexicon(&rank_by_pmi_diff(s.pmi), &s.cooc, merge_params(&ctx.cfg));
    write_file(&ctx.out(out, "merged.csv"), |buf| Ok(write_merged_csv(&merged, buf)?))?;
    Ok(outcome)
}

fn polarity_params(cfg: &PipelineConfig) -> PolarityParams {
    PolarityParams { theta: cfg.thresholds.theta, min_support: cfg.thresholds.min_support }
}

pub fn refine(ctx: &Ctx, lexicon: &[LexiconEntry], s: &Stats, out: Option<&Path>) -> Result<(Vec<LexiconEntry>, Outcome)> {
    let lang = ctx.cfg.languages.corpus;
    let mismatches = detect_mismatches(lexicon, &s.pmi, lang, polarity_params(&ctx.cfg));
    let evidence = Evidence::new(&s.pmi, &s.cooc, &s.corpus);
    let client = clients::refiner(&ctx.cfg, ctx.transport)?;
    let clock = clients::clock(&ctx.cfg);
    let (refined, audit) = apply_refinements(&mismatches, &client, lexicon, &evidence, clock.as_ref());
    let main = ctx.out(out, "refined.csv");
    save_lexicon(&main, &refined)?;
    write_file(&ctx.beside(&main, "audit.jsonl"), |buf| Ok(audit.write_jsonl(buf)?))?;
    write_file(&ctx.beside(&main, "unrefined.csv"), |buf| Ok(audit.write_unrefined_csv(buf)?))?;
    eprintln!("{} mismatches, {} refined", mismatches.len(), audit.successes());
    Ok((refined, Outcome { service_failures: client.failures() }))
}

pub fn refine_cmd(ctx: &Ctx, out: Option<&Path>) -> Result<Outcome> {
    let lexicon = ctx.load_lexicon()?;
    let vocab = ctx.vocabularies()?;
    let (s, mut outcome) = stats(ctx, vocab.as_ref(), Some(&lexicon))?;
    let (_, o) = refine(ctx, &lexicon, &s, out)?;
    outcome.absorb(o);
    Ok(outcome)
}

/// clean -> translate -> normalize -> stats -> merge -> refine, every stage
/// writing its artifacts into the output directory.
pub fn pipeline(ctx: &Ctx) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let (cleaned, o) = clean(ctx, None)?;
    outcome.absorb(o);
    let (expanded, o) = translate(ctx, &cleaned, None)?;
    outcome.absorb(o);
    let vocab = ctx.vocabularies()?;
    let normalized = normalize(ctx, &expanded, vocab.as_ref(), ctx.cfg.thresholds.similarity, None)?;

    let (s, o) = stats(ctx, vocab.as_ref(), Some(&normalized))?;
    outcome.absorb(o);
    let dir = ctx.cfg.output_dir();
    write_file(&dir.join("annotated.jsonl"), |buf| Ok(write_corpus_to(&s.corpus, buf)?))?;
    let ranked = rank_by_pmi_diff(s.pmi.clone());
    write_file(&dir.join("pmi.csv"), |buf| Ok(write_pmi_csv(&ranked, buf)?))?;
    write_file(&dir.join("cooccurrence.csv"), |buf| Ok(write_cooccurrence_csv(&s.cooc, buf)?))?;
    let merged = merge_lexicon(&ranked, &s.cooc, merge_params(&ctx.cfg));
    write_file(&dir.join("merged.csv"), |buf| Ok(write_merged_csv(&merged, buf)?))?;

    let (_, o) = refine(ctx, &normalized, &s, None)?;
    outcome.absorb(o);
    Ok(outcome)
}

// ---- scoring ----

fn scorer(ctx: &Ctx) -> Result<LexiconScorer> {
    Ok(LexiconScorer::new(&ctx.load_lexicon()?, ctx.cfg.languages.corpus)?)
}

pub fn score(ctx: &Ctx, out: Option<&Path>) -> Result<Outcome> {
    let scorer = scorer(ctx)?;
    let t = &ctx.cfg.thresholds;
    let corpus = read_corpus(ctx.corpus_path()?)?;
    use rayon::prelude::*;
    let scored: Vec<LabeledSentence> = corpus
        .par_iter()
        .map(|s| {
            let score = scorer.score(&s.text);
            let label = label_from_score(score, t.tau_pos, t.tau_neg)?;
            Ok(LabeledSentence { label: Some(label), score: Some(round6(score)), ..s.clone() })
        })
        .collect::<Result<_>>()?;
    write_file(&ctx.out(out, "scored.jsonl"), |buf| Ok(write_corpus_to(&scored, buf)?))?;
    Ok(Outcome::default())
}

pub fn explain(ctx: &Ctx, text: &str, out: Option<&Path>) -> Result<Outcome> {
    let scorer = scorer(ctx)?;
    let contributions: Vec<Value> = scorer
        .explain(text)
        .into_iter()
        .map(|c| json!({ "token": c.token, "weight": round6(c.weight) }))
        .collect();
    match out {
        Some(path) => write_json(path, &contributions)?,
        None => println!("{}", serde_json::to_string_pretty(&contributions)?),
    }
    Ok(Outcome::default())
}

pub fn report_distribution(ctx: &Ctx, out: Option<&Path>) -> Result<Outcome> {
    let corpus = read_corpus(ctx.corpus_path()?)?;
    let report = distribution_report(&corpus)?;
    write_file(&ctx.out(out, "distribution.csv"), |buf| Ok(report.write_csv(buf)?))?;
    Ok(Outcome::default())
}

// ---- evaluation ----

pub fn split(ctx: &Ctx, ratio: Option<f64>, train_out: Option<&Path>, test_out: Option<&Path>) -> Result<Outcome> {
    let corpus = read_corpus(ctx.corpus_path()?)?;
    let ratio = ratio.or(ctx.cfg.split_ratio).unwrap_or(0.8);
    let (train, test) = split_dataset(&corpus, ratio, ctx.cfg.seed)?;
    write_file(&ctx.out(train_out, "train.jsonl"), |buf| Ok(write_corpus_to(&train, buf)?))?;
    write_file(&ctx.out(test_out, "test.jsonl"), |buf| Ok(write_corpus_to(&test, buf)?))?;
    Ok(Outcome::default())
}

fn metrics_json(m: &ConfusionMatrix, r: &MetricsReport) -> Value {
    let per_class: Vec<Value> = r
        .per_class
        .iter()
        .map(|c| {
            json!({
                "class": c.class,
                "precision": round6(c.precision),
                "recall": round6(c.recall),
                "f1": round6(c.f1),
                "support": c.support,
            })
        })
        .collect();
    json!({
        "accuracy": round6(r.accuracy),
        "precision_macro": round6(r.precision_macro),
        "recall_macro": round6(r.recall_macro),
        "f1_macro": round6(r.f1_macro),
        "precision_micro": round6(r.precision_micro),
        "recall_micro": round6(r.recall_micro),
        "f1_micro": round6(r.f1_micro),
        "per_class": per_class,
        "class_order": SentimentClass::ORDER,
        "confusion": m.counts,
    })
}

fn evaluate(truths: &[SentimentClass], preds: &[SentimentClass]) -> Result<Value> {
    let (m, r) = confusion_and_metrics(truths, preds)?;
    ensure!(r.f1_micro == r.accuracy, "micro-F1 {} differs from accuracy {}", r.f1_micro, r.accuracy);
    Ok(metrics_json(&m, &r))
}

pub fn eval(ctx: &Ctx, predictions: &Path, out: Option<&Path>) -> Result<Outcome> {
    let truth = read_corpus(ctx.corpus_path()?)?;
    let preds = read_corpus(predictions)?;
    let by_id: BTreeMap<&str, SentimentClass> = preds
        .iter()
        .map(|p| Ok((p.id.as_str(), p.label.with_context(|| format!("prediction `{}` has no label", p.id))?)))
        .collect::<Result<_>>()?;
    let mut t = Vec::new();
    let mut p = Vec::new();
    for s in &truth {
        let label = s.label.with_context(|| format!("sentence `{}` has no gold label", s.id))?;
        let Some(pred) = by_id.get(s.id.as_str()) else { bail!("no prediction for sentence `{}`", s.id) };
        t.push(label);
        p.push(*pred);
    }
    let metrics = evaluate(&t, &p)?;
    write_json(&ctx.out(out, "metrics.json"), &metrics)?;
    Ok(Outcome::default())
}

pub fn stack(
    ctx: &Ctx,
    train: Option<&Path>,
    test: Option<&Path>,
    model_in: Option<&Path>,
    out: Option<&Path>,
) -> Result<Outcome> {
    let read = |p: &Path| -> Result<_> {
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        read_prob_csv(&bytes).with_context(|| format!("in {}", p.display()))
    };
    let model_path = ctx.out(out, "stacker_model.json");
    let model: StackerModel = match (model_in, train) {
        (Some(path), _) => serde_json::from_slice(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)
            .with_context(|| format!("parsing model {}", path.display()))?,
        (None, Some(train)) => {
            let model = train_stacker(&read(train)?, ctx.cfg.stacker)?;
            write_json(&model_path, &model)?;
            eprintln!(
                "trained on {} base models, {} iterations, train accuracy {:.6}",
                model.k,
                model.loss_trace.len().saturating_sub(1),
                model.train_accuracy
            );
            model
        }
        (None, None) => bail!("stack needs --train or --model"),
    };

    let Some(test) = test else { return Ok(Outcome::default()) };
    let rows = read(test)?;
    let (labels, probs) = predict_stacker(&model, &rows)?;
    write_file(&ctx.beside(&model_path, "stacker_predictions.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["id", "label", "predicted", "p_neg", "p_neu", "p_pos"])?;
        for ((r, l), p) in rows.iter().zip(&labels).zip(&probs) {
            let mut rec = vec![r.id.clone(), r.label.map(|c| c.to_string()).unwrap_or_default(), l.to_string()];
            rec.extend(p.iter().map(|x| format!("{x:.6}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;
    if rows.iter().all(|r| r.label.is_some()) {
        let truths: Vec<SentimentClass> = rows.iter().filter_map(|r| r.label).collect();
        write_json(&ctx.beside(&model_path, "stacker_metrics.json"), &evaluate(&truths, &labels)?)?;
    }
    Ok(Outcome::default())
}

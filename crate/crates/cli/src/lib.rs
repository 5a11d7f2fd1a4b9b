//! The `trilex` command line. [`run`] parses arguments, loads the config,
//! applies flag overrides and dispatches to a subcommand.
//!
//! Exit codes: 0 on success, 1 for input or configuration errors (including
//! an unknown subcommand), 2 when an external service still failed after
//! retries. Artifacts are written before a service failure is reported.

pub mod clients;
mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use trilex::Language;

use crate::commands::{Ctx, Outcome};
use crate::config::PipelineConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_SERVICE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "trilex", version, about = "Corpus-driven sentiment lexicon pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use the built-in mock clients; never touches the network.
    #[arg(long, global = true)]
    offline: bool,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for default output file names.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Directory of `<code>.txt` vocabularies.
    #[arg(long, global = true)]
    vocab_dir: Option<PathBuf>,
    /// Corpus language code.
    #[arg(long, global = true)]
    lang: Option<Language>,
}

#[derive(Args, Debug)]
struct Out {
    /// Main output file (companions are written next to it).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Deduplicate and whitespace-normalize the lexicon.
    Clean(Out),
    /// Fill missing translation columns through the pivot language.
    Translate(Out),
    /// Normalize lexicon words and fuzzy-correct them against vocabularies.
    Normalize {
        #[command(flatten)]
        out: Out,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Per-token PMI with the positive and negative classes.
    StatsPmi(Out),
    /// Strongest co-occurrence partner of every token.
    StatsCooc(Out),
    /// PMI lexicon merged with co-occurrence evidence.
    Merge(Out),
    /// Flag lexicon/corpus polarity conflicts and reassign them.
    Refine(Out),
    /// Score every corpus sentence with the lexicon.
    Score(Out),
    /// Leave-one-out token contributions for one sentence.
    Explain {
        #[arg(long)]
        text: String,
        #[command(flatten)]
        out: Out,
    },
    /// Stratified train/test split of the corpus.
    Split {
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        train_out: Option<PathBuf>,
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
    /// Metrics of predicted labels (JSONL) against the corpus labels.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[command(flatten)]
        out: Out,
    },
    /// Train (or load) the stacking meta-learner and predict.
    Stack {
        /// Probability CSV to train on.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Probability CSV to predict.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Existing model JSON instead of training.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        out: Out,
    },
    /// Class counts and percentages of the corpus labels.
    ReportDistribution(Out),
    /// clean, translate, normalize, stats, merge and refine in one go.
    Pipeline,
}

fn configure(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let p = &mut cfg.paths;
    for (slot, flag) in [
        (&mut p.lexicon, &g.lexicon),
        (&mut p.corpus, &g.corpus),
        (&mut p.vocab_dir, &g.vocab_dir),
        (&mut p.output_dir, &g.out_dir),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    cfg.offline |= g.offline;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(lang) = g.lang {
        cfg.languages.corpus = lang;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(command: &Command, ctx: &Ctx) -> Result<Outcome> {
    use commands as c;
    match command {
        Command::Clean(o) => c::clean(ctx, o.out.as_deref()).map(|(_, r)| r),
        Command::Translate(o) => {
            let lexicon = ctx.load_lexicon()?;
            c::translate(ctx, &lexicon, o.out.as_deref()).map(|(_, r)| r)
        }
        Command::Normalize { out, threshold } => {
            let lexicon = ctx.load_lexicon()?;
            let vocab = ctx.vocabularies()?;
            let threshold = threshold.unwrap_or(ctx.cfg.thresholds.similarity);
            c::normalize(ctx, &lexicon, vocab.as_ref(), threshold, out.out.as_deref())?;
            Ok(Outcome::default())
        }
        Command::StatsPmi(o) => c::stats_pmi(ctx, o.out.as_deref()),
        Command::StatsCooc(o) => c::stats_cooc(ctx, o.out.as_deref()),
        Command::Merge(o) => c::merge(ctx, o.out.as_deref()),
        Command::Refine(o) => c::refine_cmd(ctx, o.out.as_deref()),
        Command::Score(o) => c::score(ctx, o.out.as_deref()),
        Command::Explain { text, out } => c::explain(ctx, text, out.out.as_deref()),
        Command::Split { ratio, train_out, test_out } => {
            c::split(ctx, *ratio, train_out.as_deref(), test_out.as_deref())
        }
        Command::Eval { pred, out } => c::eval(ctx, pred, out.out.as_deref()),
        Command::Stack { train, test, model, out } => {
            c::stack(ctx, train.as_deref(), test.as_deref(), model.as_deref(), out.out.as_deref())
        }
        Command::ReportDistribution(o) => c::report_distribution(ctx, o.out.as_deref()),
        Command::Pipeline => c::pipeline(ctx),
    }
}

/// Runs the CLI with the real HTTP transport for online commands.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_transport(args, &clients::http_transport)
}

/// Like [`run`], with the transport constructor supplied by the caller.
pub fn run_with_transport<I, T>(args: I, transport: clients::TransportFactory) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match configure(&cli.global) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_INPUT;
        }
    };
    let ctx = Ctx { cfg, transport };
    let result = match cli.global.workers {
        Some(0) => Err(anyhow::anyhow!("--workers must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command, &ctx)),
            Err(e) => Err(e.into()),
        },
        None => dispatch(&cli.command, &ctx),
    };
    match result {
        Ok(outcome) if outcome.service_failures > 0 => {
            eprintln!("error: {} external service call(s) failed after retries", outcome.service_failures);
            EXIT_SERVICE
        }
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}

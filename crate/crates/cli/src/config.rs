//! Pipeline configuration: a TOML file whose values command-line flags may
//! override. Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use trilex::textnorm::{NormalizationConfig, DEFAULT_SIMILARITY_THRESHOLD};
use trilex::Language;

pub const CACHE_DIR_ENV: &str = "TRILEX_CACHE_DIR";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub lexicon: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub vocab_dir: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Languages {
    pub source: Language,
    pub pivot: Language,
    pub targets: Vec<Language>,
    /// Language of the corpus; selects the lexicon column matched against it.
    pub corpus: Language,
}

impl Default for Languages {
    fn default() -> Self {
        Languages {
            source: Language::French,
            pivot: Language::English,
            targets: Language::TRANSLATIONS.to_vec(),
            corpus: Language::Zulu,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub similarity: f64,
    pub theta: f64,
    pub min_support: u64,
    pub tau_pos: f64,
    pub tau_neg: f64,
    pub association_strength: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            similarity: DEFAULT_SIMILARITY_THRESHOLD,
            theta: trilex::corpstats::DEFAULT_DEAD_ZONE,
            min_support: trilex::refine::DEFAULT_MIN_SUPPORT,
            tau_pos: trilex::senti::DEFAULT_TAU_POS,
            tau_neg: trilex::senti::DEFAULT_TAU_NEG,
            association_strength: trilex::corpstats::DEFAULT_ASSOCIATION_STRENGTH,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Smoothing {
    pub pmi_alpha: f64,
    pub association_alpha: f64,
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing {
            pmi_alpha: trilex::corpstats::DEFAULT_PMI_ALPHA,
            association_alpha: trilex::corpstats::DEFAULT_ASSOCIATION_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Clients {
    pub base_url: Option<String>,
    pub endpoints: trilex::xclients::http::Endpoints,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub attempts: u32,
}

impl Default for Clients {
    fn default() -> Self {
        Clients {
            base_url: None,
            endpoints: Default::default(),
            timeout_secs: 30,
            max_in_flight: 4,
            attempts: 3,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub languages: Languages,
    pub thresholds: Thresholds,
    pub smoothing: Smoothing,
    pub normalization: NormalizationConfig,
    pub clients: Clients,
    pub offline: bool,
    pub seed: u64,
    pub split_ratio: Option<f64>,
    pub stacker: trilex::evalstack::Hyperparams,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.paths.lexicon,
            &mut cfg.paths.corpus,
            &mut cfg.paths.vocab_dir,
            &mut cfg.paths.cache,
            &mut cfg.paths.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if !(0.0..=1.0).contains(&t.similarity) {
            bail!("similarity threshold {} outside [0, 1]", t.similarity);
        }
        if !(t.theta >= 0.0) {
            bail!("theta {} must be non-negative", t.theta);
        }
        if !(t.tau_neg < t.tau_pos) {
            bail!("tau_neg {} must be below tau_pos {}", t.tau_neg, t.tau_pos);
        }
        if !(t.association_strength >= 0.0) {
            bail!("association strength {} must be non-negative", t.association_strength);
        }
        if !(self.smoothing.pmi_alpha > 0.0 && self.smoothing.association_alpha > 0.0) {
            bail!("smoothing alphas must be positive");
        }
        if self.clients.max_in_flight == 0 || self.clients.attempts == 0 {
            bail!("max_in_flight and attempts must be at least 1");
        }
        if let Some(r) = self.split_ratio {
            if !(r > 0.0 && r < 1.0) {
                bail!("split ratio {r} outside (0, 1)");
            }
        }
        self.normalization.validate()?;
        let l = &self.languages;
        if l.source == l.pivot || l.targets.contains(&l.source) {
            bail!("source language {} must differ from the pivot and targets", l.source);
        }
        Ok(())
    }

    /// Cache directory: `TRILEX_CACHE_DIR` wins over the config file.
    pub fn cache_dir(&self) -> Option<PathBuf> {
        std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from).or_else(|| self.paths.cache.clone())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from("trilex-out"))
    }
}

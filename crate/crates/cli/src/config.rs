//! TOML configuration. Every key is optional; unknown keys are rejected.
//! Relative paths are resolved against the directory of the config file.
//!
//! ```toml
//! seed = 7
//! jobs = 4
//! format = "json"          # or "text"
//! strict = false
//! timeout_mins = 30
//! channels = "both"        # "basic", "fr" or "both"
//! fcg_filter = true
//! min_string_len = 5
//!
//! [paths]
//! db = "db"
//! model = "model.json"
//! corpus = "corpus"
//!
//! [string_weighting]
//! cap = 50.0
//! special_factor = 2.0
//!
//! [retrieval]
//! neighbors = 100
//! unit_cap = 200
//! basic_edge_threshold = 3
//! retrieval_edge_threshold = 1
//! pairing_threshold = 0.8
//! # retrieval_min_score = 0.8
//!
//! [rules]
//! string_ratio = 0.5
//! weight_sum = 100.0
//! weight_ratio = 0.1
//! export_count = 20
//!
//! [version_weights]
//! major = 10.0
//! minor = 1.0
//! patch = 0.1
//!
//! [train]             # embedding training, see `TrainConfig`
//! [corpus]            # synthetic corpus, see `CorpusSpec`
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Deserialize;
use tplscan_core::detection::{BasicRules, Channels, DetectionConfig, RetrievalConfig};
use tplscan_core::embedding::TrainConfig;
use tplscan_core::evaluation::CorpusSpec;
use tplscan_core::extraction::{ExtractOptions, StringWeighting};
use tplscan_core::reporting::VersionDistanceWeights;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ChannelArg {
    Basic,
    Fr,
    Both,
}

impl From<ChannelArg> for Channels {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Basic => Channels::Basic,
            ChannelArg::Fr => Channels::Retrieval,
            ChannelArg::Both => Channels::Both,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub db: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub format: Format,
    pub strict: bool,
    pub timeout_mins: u64,
    pub channels: ChannelArg,
    pub fcg_filter: bool,
    pub min_string_len: usize,
    pub string_weighting: StringWeighting,
    pub retrieval: RetrievalConfig,
    pub rules: BasicRules,
    pub version_weights: VersionDistanceWeights,
    pub train: TrainConfig,
    pub corpus: CorpusSpec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            seed: None,
            jobs: None,
            format: Format::Json,
            strict: false,
            timeout_mins: 30,
            channels: ChannelArg::Both,
            fcg_filter: true,
            min_string_len: ExtractOptions::default().min_string_len,
            string_weighting: StringWeighting::default(),
            retrieval: RetrievalConfig::default(),
            rules: BasicRules::default(),
            version_weights: VersionDistanceWeights::default(),
            train: TrainConfig::default(),
            corpus: CorpusSpec::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.db, &mut cfg.paths.model, &mut cfg.paths.corpus]
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
        self.retrieval.validate()?;
        if self.jobs == Some(0) {
            anyhow::bail!("configuration error: jobs must be positive");
        }
        if self.timeout_mins == 0 {
            anyhow::bail!("configuration error: timeout_mins must be positive");
        }
        Ok(())
    }

    pub fn extract_options(&self) -> ExtractOptions {
        ExtractOptions {
            min_string_len: self.min_string_len,
            weighting: self.string_weighting.clone(),
        }
    }

    pub fn detection(&self) -> DetectionConfig {
        DetectionConfig {
            retrieval: self.retrieval,
            rules: self.rules,
            channels: self.channels.into(),
            fcg_filter: self.fcg_filter,
        }
    }
}

//! Candidate generation and filtering.
//!
//! Channel A ([`match_basic`]) matches string literals and exported names
//! through the inverted index. Channel B ([`retrieve_candidates`]) looks up
//! the nearest stored function vectors of every target function. Both lists
//! go through [`fcg_filter`], which pairs functions, contracts each call
//! graph onto its paired functions and scores a candidate by the number of
//! call edges the two contracted graphs share.

mod basic;
mod fcg;
mod retrieval;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingModel, FunctionVector};
use crate::error::{Error, Result};
use crate::extraction::{BinaryFeatureSet, FunctionId};
use crate::featuredb::{BasicFeature, FeatureDb, UnitRef};

pub use basic::{match_basic, BasicOverlap, BasicRules};
pub use fcg::{build_mini_fcg, common_edges, MiniFcg};
pub use retrieval::{pair_functions, retrieve_candidates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "B")]
    B,
    /// Survived through both channels.
    #[serde(rename = "A+B")]
    Both,
}

impl Channel {
    fn merge(self, other: Channel) -> Channel {
        if self == other {
            self
        } else {
            Channel::Both
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedFeature {
    pub feature: BasicFeature,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionPair {
    pub target: FunctionId,
    pub unit: FunctionId,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub unit: UnitRef,
    pub channel: Channel,
    pub matched_basic: Vec<MatchedFeature>,
    pub matched_pairs: Vec<FunctionPair>,
    /// Common-edge count after filtering. Before filtering: common feature
    /// count for channel A, similar-function count for channel B.
    pub score: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Neighbours retrieved per target function (K).
    pub neighbors: usize,
    pub unit_cap: usize,
    /// Minimum common edges for a channel-A candidate.
    pub basic_edge_threshold: usize,
    /// Minimum common edges for a channel-B candidate.
    pub retrieval_edge_threshold: usize,
    /// A function pair needs a cosine strictly above this.
    pub pairing_threshold: f64,
    /// Retrieval hits at or below this score are not counted as similar
    /// functions. `None` uses `pairing_threshold`.
    pub retrieval_min_score: Option<f64>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            neighbors: 100,
            unit_cap: 200,
            basic_edge_threshold: 3,
            retrieval_edge_threshold: 1,
            pairing_threshold: 0.8,
            retrieval_min_score: None,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("neighbors", self.neighbors),
            ("unit_cap", self.unit_cap),
            ("basic_edge_threshold", self.basic_edge_threshold),
            ("retrieval_edge_threshold", self.retrieval_edge_threshold),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.pairing_threshold > 0.0 && self.pairing_threshold < 1.0) {
            return Err(Error::Config("pairing_threshold must lie in (0, 1)".into()));
        }
        if let Some(s) = self.retrieval_min_score {
            if !(-1.0..1.0).contains(&s) {
                return Err(Error::Config("retrieval_min_score must lie in [-1, 1)".into()));
            }
        }
        Ok(())
    }

    /// The effective retrieval score floor.
    pub fn resolved(mut self) -> Self {
        self.retrieval_min_score.get_or_insert(self.pairing_threshold);
        self
    }
}

/// Merges candidates by unit, keeping the highest score. Output is ordered
/// by unit id.
pub fn merge_candidates(candidates: impl IntoIterator<Item = Candidate>) -> Vec<Candidate> {
    let mut by_unit: BTreeMap<String, Candidate> = BTreeMap::new();
    for c in candidates {
        match by_unit.get_mut(&c.unit.unit) {
            None => {
                by_unit.insert(c.unit.unit.clone(), c);
            }
            Some(have) => {
                let channel = have.channel.merge(c.channel);
                let mut basic = std::mem::take(&mut have.matched_basic);
                if basic.is_empty() {
                    basic = c.matched_basic.clone();
                }
                if c.score > have.score {
                    *have = c;
                }
                have.channel = channel;
                have.matched_basic = basic;
            }
        }
    }
    by_unit.into_values().collect()
}

/// Scores every candidate by common call edges and keeps those reaching
/// their channel's threshold. Channel-A candidates are paired by cosine
/// argmax; channel-B candidates reuse their retrieval pairs.
pub fn fcg_filter(
    candidates: Vec<Candidate>,
    target: &BinaryFeatureSet,
    target_vectors: &[FunctionVector],
    db: &FeatureDb,
    cfg: &RetrievalConfig,
) -> Result<Vec<Candidate>> {
    let scored = candidates
        .into_par_iter()
        .map(|mut c| {
            let payload = db
                .unit_index(&c.unit.unit)
                .and_then(|i| db.payload(i))
                .ok_or_else(|| Error::Integrity(format!("no payload stored for unit `{}`", c.unit.unit)))?;
            if c.channel != Channel::B {
                let store = db.store();
                let unit_vectors = payload
                    .vectors
                    .iter()
                    .map(|(f, &row)| (f.as_str(), store.row(row as usize)));
                c.matched_pairs = pair_functions(target_vectors, unit_vectors, cfg.pairing_threshold);
            }
            let t_anchors: BTreeSet<FunctionId> = c.matched_pairs.iter().map(|p| p.target.clone()).collect();
            let u_anchors: BTreeSet<FunctionId> = c.matched_pairs.iter().map(|p| p.unit.clone()).collect();
            let mt = build_mini_fcg(&target.fcg, &t_anchors);
            let mu = build_mini_fcg(&payload.fcg, &u_anchors);
            c.score = common_edges(&mt, &mu, &c.matched_pairs);
            let threshold = match c.channel {
                Channel::B => cfg.retrieval_edge_threshold,
                _ => cfg.basic_edge_threshold,
            };
            Ok((c.score >= threshold).then_some(c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge_candidates(scored.into_iter().flatten()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channels {
    /// Channel A only.
    Basic,
    /// Channel B only.
    #[serde(rename = "fr")]
    Retrieval,
    Both,
}

impl Channels {
    pub fn basic(self) -> bool {
        matches!(self, Channels::Basic | Channels::Both)
    }

    pub fn retrieval(self) -> bool {
        matches!(self, Channels::Retrieval | Channels::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub retrieval: RetrievalConfig,
    pub rules: BasicRules,
    pub channels: Channels,
    pub fcg_filter: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalConfig::default(),
            rules: BasicRules::default(),
            channels: Channels::Both,
            fcg_filter: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScanOutcome {
    pub candidates: Vec<Candidate>,
    pub warnings: Vec<String>,
}

/// A configured detector over an immutable database snapshot.
pub struct Detector<'a> {
    db: &'a FeatureDb,
    model: Option<&'a EmbeddingModel>,
    cfg: DetectionConfig,
}

impl<'a> Detector<'a> {
    pub fn new(db: &'a FeatureDb, model: Option<&'a EmbeddingModel>, cfg: DetectionConfig) -> Result<Self> {
        cfg.retrieval.validate()?;
        let mut cfg = cfg;
        cfg.retrieval = cfg.retrieval.resolved();
        if cfg.channels.retrieval() && model.is_none() {
            return Err(Error::Config("function retrieval needs an embedding model".into()));
        }
        if let (Some(m), Some(have)) = (model, db.model_fingerprint()) {
            let fp = m.fingerprint();
            if fp != have {
                return Err(Error::Config(format!(
                    "model {fp} does not match the model {have} used to build the database"
                )));
            }
        }
        Ok(Self { db, model, cfg })
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.cfg
    }

    pub fn scan(&self, target: &BinaryFeatureSet) -> Result<ScanOutcome> {
        let mut warnings = Vec::new();
        let vectors = match self.model {
            Some(m) => m.embed_feature_set(target)?,
            None => Vec::new(),
        };
        let mut candidates = Vec::new();
        if self.cfg.channels.basic() {
            candidates.extend(match_basic(target, self.db, &self.cfg.rules));
        }
        if self.cfg.channels.retrieval() {
            candidates.extend(retrieve_candidates(&vectors, self.db, &self.cfg.retrieval)?);
        }
        let candidates = if !self.cfg.fcg_filter {
            merge_candidates(candidates)
        } else if self.model.is_none() {
            warnings
                .push("no embedding model: FCG filter skipped, basic-feature candidates reported unfiltered".into());
            merge_candidates(candidates)
        } else {
            fcg_filter(candidates, target, &vectors, self.db, &self.cfg.retrieval)?
        };
        Ok(ScanOutcome { candidates, warnings })
    }
}

//! The TPL feature database: library → version → comparison unit → feature.
//!
//! Basic features go into an [`InvertedIndex`]; function vectors go into an
//! exact [`VectorStore`]. Each unit also keeps its FCG and the rows of its
//! vectors so the FCG filter can rebuild both sides of a comparison. A
//! database is built by a single writer and then shared read-only.

mod index;
mod persist;
mod store;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingModel, FunctionVector};
use crate::error::{Error, Result};
use crate::extraction::{embeddable_functions, BinaryFeatureSet, Fcg, FunctionId};
use crate::reporting::Version;

pub use index::{BasicFeature, InvertedIndex, Posting, UnitTotals};
pub use store::{Hit, VectorId, VectorStore};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnitRef {
    pub library: String,
    pub version: String,
    pub unit: String,
}

/// What the FCG filter needs about a unit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitPayload {
    pub fcg: Fcg,
    /// Vector-store row of every embedded function.
    pub vectors: BTreeMap<FunctionId, u32>,
}

#[derive(Debug, Clone, Default)]
pub struct FeatureDb {
    units: Vec<UnitRef>,
    versions: Vec<Version>,
    by_id: HashMap<String, u32>,
    index: InvertedIndex,
    store: VectorStore,
    payloads: Vec<UnitPayload>,
    model_fingerprint: Option<String>,
}

impl FeatureDb {
    pub fn new() -> Self {
        Self::default()
    }

    /// Indexes a library unit, embedding its functions with `model` when
    /// one is given.
    pub fn index_unit(&mut self, fs: &BinaryFeatureSet, model: Option<&EmbeddingModel>) -> Result<u32> {
        match model {
            Some(m) => {
                let vectors = m.embed_feature_set(fs)?;
                self.index_unit_with_vectors(fs, &vectors, Some(&m.fingerprint()))
            }
            None => self.index_unit_with_vectors(fs, &[], None),
        }
    }

    /// Indexes a unit whose function vectors were computed elsewhere by the
    /// model identified by `fingerprint`.
    pub fn index_unit_with_vectors(
        &mut self,
        fs: &BinaryFeatureSet,
        vectors: &[FunctionVector],
        fingerprint: Option<&str>,
    ) -> Result<u32> {
        let prov = fs.provenance.as_ref().ok_or_else(|| {
            Error::validation("library", format!("unit `{}` has no library provenance", fs.binary_id))
        })?;
        if self.by_id.contains_key(&fs.binary_id) {
            return Err(Error::Conflict(fs.binary_id.clone()));
        }
        let version = Version::parse(&prov.version)?;
        if !vectors.is_empty() {
            let fp = fingerprint
                .ok_or_else(|| Error::Config("function vectors supplied without a model fingerprint".into()))?;
            if let Some(have) = self.model_fingerprint.as_deref().filter(|&have| have != fp) {
                return Err(Error::Config(format!(
                    "unit `{}` embedded with model {fp}, database holds model {have}",
                    fs.binary_id
                )));
            }
            let embeddable: Vec<&str> = embeddable_functions(fs).iter().map(|a| a.function.as_str()).collect();
            let supplied: Vec<&str> = vectors.iter().map(|v| v.function.as_str()).collect();
            if embeddable != supplied {
                return Err(Error::Integrity(format!(
                    "unit `{}`: vectors do not match its embeddable functions",
                    fs.binary_id
                )));
            }
            if !self.store.is_empty() && self.store.dim() != vectors[0].vector.len() {
                return Err(Error::Shape(format!(
                    "database holds {}-vectors, unit `{}` has {}",
                    self.store.dim(),
                    fs.binary_id,
                    vectors[0].vector.len()
                )));
            }
        }

        let idx = self.units.len() as u32;
        let mut rows = BTreeMap::new();
        let rollback = self.store.len();
        for v in vectors {
            let id = VectorId {
                function: v.function.clone(),
                unit: fs.binary_id.clone(),
            };
            match self.store.push(id, &v.vector) {
                Ok(row) => rows.insert(v.function.clone(), row as u32),
                Err(e) => {
                    self.store.truncate(rollback);
                    return Err(e);
                }
            };
        }
        if !vectors.is_empty() {
            self.model_fingerprint = fingerprint.map(str::to_string);
        }

        self.index.insert_unit(
            idx,
            fs.strings.iter().map(|s| (s.value.as_str(), s.weight)),
            fs.exports.iter().map(String::as_str),
        );
        self.units.push(UnitRef {
            library: prov.library.clone(),
            version: prov.version.clone(),
            unit: fs.binary_id.clone(),
        });
        self.versions.push(version);
        self.by_id.insert(fs.binary_id.clone(), idx);
        self.payloads.push(UnitPayload {
            fcg: fs.fcg.clone(),
            vectors: rows,
        });
        Ok(idx)
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[UnitRef] {
        &self.units
    }

    pub fn unit(&self, idx: u32) -> &UnitRef {
        &self.units[idx as usize]
    }

    pub fn unit_version(&self, idx: u32) -> &Version {
        &self.versions[idx as usize]
    }

    pub fn unit_index(&self, unit_id: &str) -> Option<u32> {
        self.by_id.get(unit_id).copied()
    }

    pub fn payload(&self, idx: u32) -> Option<&UnitPayload> {
        self.payloads.get(idx as usize)
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }

    pub fn model_fingerprint(&self) -> Option<&str> {
        self.model_fingerprint.as_deref()
    }

    /// Units containing `feature`, ordered by unit id.
    pub fn lookup_basic(&self, feature: &BasicFeature) -> Vec<UnitRef> {
        let mut out: Vec<UnitRef> = self
            .index
            .posting(feature)
            .map(|p| p.units.iter().map(|&u| self.units[u as usize].clone()).collect())
            .unwrap_or_default();
        out.sort_by(|a, b| a.unit.cmp(&b.unit));
        out
    }

    pub fn topk(&self, query: &[f64], k: usize) -> Result<Vec<Hit>> {
        self.store.topk(query, k)
    }

    /// Libraries → versions → unit ids.
    pub fn hierarchy(&self) -> BTreeMap<&str, BTreeMap<&str, Vec<&str>>> {
        let mut h: BTreeMap<&str, BTreeMap<&str, Vec<&str>>> = BTreeMap::new();
        for u in &self.units {
            h.entry(&u.library)
                .or_default()
                .entry(&u.version)
                .or_default()
                .push(&u.unit);
        }
        h
    }
}

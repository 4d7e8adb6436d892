use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// A basic feature key. Strings and exported names live in separate key
/// spaces; matching is exact and case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BasicFeature {
    String(String),
    Export(String),
}

impl BasicFeature {
    pub fn text(&self) -> &str {
        match self {
            BasicFeature::String(s) | BasicFeature::Export(s) => s,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    /// Weight of the feature (string weight; 1 for exports).
    pub weight: f64,
    /// Indices of units containing the feature.
    pub units: BTreeSet<u32>,
}

/// Per-unit totals used by the basic-feature rules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitTotals {
    pub string_count: usize,
    pub string_weight: f64,
    pub export_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    pub(crate) postings: BTreeMap<BasicFeature, Posting>,
    pub(crate) totals: Vec<UnitTotals>,
}

impl InvertedIndex {
    /// Adds a unit with index `unit`, which must equal the number of units
    /// already present.
    pub(crate) fn insert_unit<'a>(
        &mut self,
        unit: u32,
        strings: impl IntoIterator<Item = (&'a str, f64)>,
        exports: impl IntoIterator<Item = &'a str>,
    ) {
        debug_assert_eq!(unit as usize, self.totals.len());
        let mut totals = UnitTotals::default();
        for (s, weight) in strings {
            let p = self.postings.entry(BasicFeature::String(s.to_string())).or_default();
            p.weight = weight;
            if p.units.insert(unit) {
                totals.string_count += 1;
                totals.string_weight += weight;
            }
        }
        for e in exports {
            let p = self.postings.entry(BasicFeature::Export(e.to_string())).or_default();
            p.weight = 1.0;
            if p.units.insert(unit) {
                totals.export_count += 1;
            }
        }
        self.totals.push(totals);
    }

    pub fn posting(&self, feature: &BasicFeature) -> Option<&Posting> {
        self.postings.get(feature)
    }

    pub fn totals(&self, unit: u32) -> Option<&UnitTotals> {
        self.totals.get(unit as usize)
    }

    pub fn feature_count(&self) -> usize {
        self.postings.len()
    }

    /// Total number of (feature, unit) postings.
    pub fn posting_count(&self) -> usize {
        self.postings.values().map(|p| p.units.len()).sum()
    }
}

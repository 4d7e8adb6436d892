use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Candidate, Channel, MatchedFeature};
use crate::extraction::BinaryFeatureSet;
use crate::featuredb::{BasicFeature, FeatureDb};

/// Thresholds of the three basic-feature rules. Every comparison is strict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasicRules {
    /// Common strings over the unit's string count.
    pub string_ratio: f64,
    /// Common string weight sum.
    pub weight_sum: f64,
    /// Common string weight over the unit's total string weight.
    pub weight_ratio: f64,
    /// Common exported names.
    pub export_count: usize,
}

impl Default for BasicRules {
    fn default() -> Self {
        Self {
            string_ratio: 0.5,
            weight_sum: 100.0,
            weight_ratio: 0.1,
            export_count: 20,
        }
    }
}

/// Overlap between a target and one unit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BasicOverlap {
    pub common_strings: usize,
    pub common_weight: f64,
    pub common_exports: usize,
    pub unit_strings: usize,
    pub unit_weight: f64,
}

impl BasicRules {
    pub fn accepts(&self, o: &BasicOverlap) -> bool {
        let by_ratio = o.unit_strings > 0 && o.common_strings as f64 / o.unit_strings as f64 > self.string_ratio;
        let by_weight = o.common_weight > self.weight_sum
            && o.unit_weight > 0.0
            && o.common_weight / o.unit_weight > self.weight_ratio;
        let by_exports = o.common_exports > self.export_count;
        by_ratio || by_weight || by_exports
    }
}

/// Channel A: units whose basic-feature overlap with `target` satisfies any
/// rule, ordered by unit id. `score` holds the common feature count.
pub fn match_basic(target: &BinaryFeatureSet, db: &FeatureDb, rules: &BasicRules) -> Vec<Candidate> {
    let mut overlaps: BTreeMap<u32, (BasicOverlap, Vec<MatchedFeature>)> = BTreeMap::new();
    let features = target
        .strings
        .iter()
        .map(|s| BasicFeature::String(s.value.clone()))
        .chain(target.exports.iter().cloned().map(BasicFeature::Export));
    for feature in features {
        let Some(posting) = db.index().posting(&feature) else {
            continue;
        };
        for &u in &posting.units {
            let (o, matched) = overlaps.entry(u).or_default();
            match feature {
                BasicFeature::String(_) => {
                    o.common_strings += 1;
                    o.common_weight += posting.weight;
                }
                BasicFeature::Export(_) => o.common_exports += 1,
            }
            matched.push(MatchedFeature {
                feature: feature.clone(),
                weight: posting.weight,
            });
        }
    }

    let mut out: Vec<Candidate> = overlaps
        .into_iter()
        .filter_map(|(u, (mut o, matched))| {
            let totals = db.index().totals(u)?;
            o.unit_strings = totals.string_count;
            o.unit_weight = totals.string_weight;
            rules.accepts(&o).then(|| Candidate {
                unit: db.unit(u).clone(),
                channel: Channel::A,
                score: matched.len(),
                matched_basic: matched,
                matched_pairs: Vec::new(),
            })
        })
        .collect();
    out.sort_by(|a, b| a.unit.unit.cmp(&b.unit.unit));
    out
}

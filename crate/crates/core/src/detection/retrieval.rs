use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::{Candidate, Channel, FunctionPair, RetrievalConfig};
use crate::embedding::{dot, FunctionVector};
use crate::error::Result;
use crate::featuredb::FeatureDb;

/// Channel B: the top-K neighbours of every target function, grouped by
/// unit. Units are ranked by the number of distinct target functions that
/// hit them (ties by unit id) and truncated to the unit cap.
pub fn retrieve_candidates(target: &[FunctionVector], db: &FeatureDb, cfg: &RetrievalConfig) -> Result<Vec<Candidate>> {
    let min_score = cfg.retrieval_min_score.unwrap_or(f64::NEG_INFINITY);
    let hits = target
        .par_iter()
        .map(|v| db.topk(&v.vector, cfg.neighbors))
        .collect::<Result<Vec<_>>>()?;

    let mut by_unit: BTreeMap<&str, (BTreeSet<&str>, Vec<FunctionPair>)> = BTreeMap::new();
    for (v, hits) in target.iter().zip(&hits) {
        for h in hits.iter().filter(|h| h.score > min_score) {
            let (functions, pairs) = by_unit.entry(h.unit.as_str()).or_default();
            functions.insert(v.function.as_str());
            pairs.push(FunctionPair {
                target: v.function.clone(),
                unit: h.function.clone(),
                cosine: h.score.clamp(-1.0, 1.0),
            });
        }
    }

    let mut ranked: Vec<(&str, usize, Vec<FunctionPair>)> = by_unit
        .into_iter()
        .map(|(u, (fs, pairs))| (u, fs.len(), pairs))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cfg.unit_cap);

    Ok(ranked
        .into_iter()
        .filter_map(|(u, count, mut pairs)| {
            let idx = db.unit_index(u)?;
            pairs.sort_by(|a, b| (&a.target, &a.unit).cmp(&(&b.target, &b.unit)));
            Some(Candidate {
                unit: db.unit(idx).clone(),
                channel: Channel::B,
                matched_basic: Vec::new(),
                matched_pairs: pairs,
                score: count,
            })
        })
        .collect())
}

/// Pairs every target function with its most similar unit function and
/// keeps the pair when the cosine exceeds `threshold`. Several target
/// functions may pair with the same unit function.
pub fn pair_functions<'a>(
    target: &[FunctionVector],
    unit: impl IntoIterator<Item = (&'a str, &'a [f64])> + Clone,
    threshold: f64,
) -> Vec<FunctionPair> {
    let mut out = Vec::new();
    for t in target {
        let mut best: Option<(&str, f64)> = None;
        for (f, v) in unit.clone() {
            let s = dot(&t.vector, v).clamp(-1.0, 1.0);
            let better = match best {
                None => true,
                Some((bf, bs)) => s > bs || (s == bs && f < bf),
            };
            if better {
                best = Some((f, s));
            }
        }
        if let Some((f, s)) = best.filter(|&(_, s)| s > threshold) {
            out.push(FunctionPair {
                target: t.function.clone(),
                unit: f.to_string(),
                cosine: s,
            });
        }
    }
    out
}

//! Metrics, the synthetic corpus and the ablation runner.

mod ablation;
mod corpus;
mod metrics;

use rayon::prelude::*;

use crate::embedding::EmbeddingModel;
use crate::error::Result;
use crate::extraction::BinaryFeatureSet;
use crate::featuredb::FeatureDb;

pub use ablation::{metrics_csv, run_ablation, scan_all, score_reports, Variant, VariantMetrics};
pub use corpus::{
    generate_corpus, load_training_pairs, perturbation_pairs, random_acfg, recompile, Corpus, CorpusSpec, GroundTruth,
    TruthEntry,
};
pub use metrics::{prf1, recall_at_k, roc_auc, version_metrics, Counts, Prf1, VersionMetrics};

/// Indexes `units` in order, embedding them in parallel first.
pub fn build_database(units: &[BinaryFeatureSet], model: Option<&EmbeddingModel>) -> Result<FeatureDb> {
    let mut db = FeatureDb::new();
    match model {
        Some(m) => {
            let fingerprint = m.fingerprint();
            let vectors = units
                .par_iter()
                .map(|u| m.embed_feature_set(u))
                .collect::<Result<Vec<_>>>()?;
            for (u, v) in units.iter().zip(&vectors) {
                db.index_unit_with_vectors(u, v, Some(&fingerprint))?;
            }
        }
        None => {
            for u in units {
                db.index_unit(u, None)?;
            }
        }
    }
    Ok(db)
}

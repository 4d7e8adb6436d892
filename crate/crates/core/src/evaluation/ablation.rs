use std::fmt::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::GroundTruth;
use super::metrics::{version_metrics, Counts, VersionMetrics};
use crate::detection::{Channels, DetectionConfig, Detector};
use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};
use crate::extraction::BinaryFeatureSet;
use crate::featuredb::FeatureDb;
use crate::reporting::{report_libraries, DetectionReport, Version, VersionDistanceWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "basic-only")]
    BasicOnly,
    #[serde(rename = "basic+fcg")]
    BasicFcg,
    #[serde(rename = "fr-only")]
    FrOnly,
    #[serde(rename = "fr+fcg")]
    FrFcg,
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "full-minus-fcg")]
    FullMinusFcg,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::BasicOnly,
        Variant::BasicFcg,
        Variant::FrOnly,
        Variant::FrFcg,
        Variant::Full,
        Variant::FullMinusFcg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BasicOnly => "basic-only",
            Variant::BasicFcg => "basic+fcg",
            Variant::FrOnly => "fr-only",
            Variant::FrFcg => "fr+fcg",
            Variant::Full => "full",
            Variant::FullMinusFcg => "full-minus-fcg",
        }
    }

    /// `base` with the channels and filter switch of this variant.
    pub fn apply(self, base: &DetectionConfig) -> DetectionConfig {
        let (channels, fcg_filter) = match self {
            Variant::BasicOnly => (Channels::Basic, false),
            Variant::BasicFcg => (Channels::Basic, true),
            Variant::FrOnly => (Channels::Retrieval, false),
            Variant::FrFcg => (Channels::Retrieval, true),
            Variant::Full => (Channels::Both, true),
            Variant::FullMinusFcg => (Channels::Both, false),
        };
        DetectionConfig {
            channels,
            fcg_filter,
            ..*base
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s || (s == "full-fcg" && *v == Variant::FullMinusFcg))
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub variant: Variant,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub version_precision: f64,
    pub mean_version_distance: f64,
}

/// Library-level counts and version metrics of `reports` against `truth`.
pub fn score_reports(
    reports: &[DetectionReport],
    truth: &GroundTruth,
    weights: &VersionDistanceWeights,
) -> Result<(Counts, VersionMetrics)> {
    let mut counts = Counts::default();
    let mut versions = Vec::new();
    for r in reports {
        let expected = truth.libraries(&r.target);
        let reported = r.libraries.iter().map(|l| l.library.clone()).collect();
        counts.add(Counts::of(&reported, &expected));
        for lib in &r.libraries {
            if let Some(v) = truth.version(&r.target, &lib.library) {
                versions.push((Version::parse(&lib.version)?, Version::parse(v)?));
            }
        }
    }
    let missing = truth.0.keys().filter(|t| !reports.iter().any(|r| &r.target == *t));
    for t in missing {
        counts.relevant += truth.libraries(t).len();
    }
    Ok((counts, version_metrics(&versions, weights)))
}

/// Scans every target with one detector configuration.
pub fn scan_all(
    db: &FeatureDb,
    model: Option<&EmbeddingModel>,
    targets: &[BinaryFeatureSet],
    cfg: DetectionConfig,
) -> Result<Vec<DetectionReport>> {
    let detector = Detector::new(db, model, cfg)?;
    targets
        .par_iter()
        .map(|t| {
            let outcome = detector.scan(t)?;
            report_libraries(&t.binary_id, &outcome.candidates)
        })
        .collect()
}

/// Runs each variant over the same targets and database.
pub fn run_ablation(
    db: &FeatureDb,
    model: Option<&EmbeddingModel>,
    targets: &[BinaryFeatureSet],
    truth: &GroundTruth,
    variants: &[Variant],
    base: &DetectionConfig,
    weights: &VersionDistanceWeights,
) -> Result<Vec<VariantMetrics>> {
    variants
        .iter()
        .map(|&variant| {
            let reports = scan_all(db, model, targets, variant.apply(base))?;
            let (counts, vm) = score_reports(&reports, truth, weights)?;
            let p = counts.prf1();
            Ok(VariantMetrics {
                variant,
                precision: p.precision,
                recall: p.recall,
                f1: p.f1,
                true_positives: counts.true_positives,
                false_positives: counts.false_positives(),
                false_negatives: counts.false_negatives(),
                version_precision: vm.precision,
                mean_version_distance: vm.mean_distance,
            })
        })
        .collect()
}

pub fn metrics_csv(rows: &[VariantMetrics]) -> String {
    let mut out = String::from("variant,precision,recall,f1,tp,fp,fn,vp,vd\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{},{},{},{:.6},{:.6}",
            r.variant.name(),
            r.precision,
            r.recall,
            r.f1,
            r.true_positives,
            r.false_positives,
            r.false_negatives,
            r.version_precision,
            r.mean_version_distance
        );
    }
    out
}

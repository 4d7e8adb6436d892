//! Library-level verdicts and version identification.

mod version;

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::detection::{Candidate, Channel};
use crate::error::{Error, Result};

pub use version::{version_distance, Version, VersionDistanceWeights};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub unit: String,
    pub version: String,
    pub channel: Channel,
    pub score: usize,
    pub matched_pairs: usize,
    pub matched_features: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryReport {
    pub library: String,
    pub version: String,
    pub version_scores: BTreeMap<String, usize>,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub target: String,
    pub libraries: Vec<LibraryReport>,
}

/// Sums candidate scores per version and returns the best version with the
/// score table. Ties go to the latest version.
pub fn identify_version<'a>(
    candidates: impl IntoIterator<Item = &'a Candidate>,
) -> Result<(Version, BTreeMap<Version, usize>)> {
    let mut scores: BTreeMap<Version, usize> = BTreeMap::new();
    for c in candidates {
        *scores.entry(Version::parse(&c.unit.version)?).or_default() += c.score;
    }
    let best = scores
        .iter()
        .fold(None::<(&Version, usize)>, |best, (v, &s)| match best {
            Some((_, bs)) if bs > s => best,
            _ => Some((v, s)),
        })
        .map(|(v, _)| v.clone())
        .ok_or_else(|| Error::Domain("version identification needs at least one candidate".into()))?;
    Ok((best, scores))
}

/// Groups surviving candidates by library and identifies a version for each.
pub fn report_libraries(target: &str, candidates: &[Candidate]) -> Result<DetectionReport> {
    let mut by_library: BTreeMap<&str, Vec<&Candidate>> = BTreeMap::new();
    for c in candidates {
        by_library.entry(&c.unit.library).or_default().push(c);
    }
    let mut libraries = Vec::with_capacity(by_library.len());
    for (library, mut cands) in by_library {
        let (best, scores) = identify_version(cands.iter().copied())?;
        cands.sort_by(|a, b| a.unit.unit.cmp(&b.unit.unit));
        libraries.push(LibraryReport {
            library: library.to_string(),
            version: best.raw,
            version_scores: scores.into_iter().map(|(v, s)| (v.raw, s)).collect(),
            evidence: cands
                .into_iter()
                .map(|c| Evidence {
                    unit: c.unit.unit.clone(),
                    version: c.unit.version.clone(),
                    channel: c.channel,
                    score: c.score,
                    matched_pairs: c.matched_pairs.len(),
                    matched_features: c.matched_basic.len(),
                })
                .collect(),
        });
    }
    Ok(DetectionReport {
        target: target.to_string(),
        libraries,
    })
}

fn channel_label(c: Channel) -> &'static str {
    match c {
        Channel::A => "A",
        Channel::B => "B",
        Channel::Both => "A+B",
    }
}

/// Human-readable rendering of a report.
pub fn render_text(report: &DetectionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "target: {}", report.target);
    if report.libraries.is_empty() {
        let _ = writeln!(out, "no libraries detected");
    }
    for lib in &report.libraries {
        let _ = writeln!(out, "library {} version {}", lib.library, lib.version);
        let table: Vec<String> = lib.version_scores.iter().map(|(v, s)| format!("{v}={s}")).collect();
        let _ = writeln!(out, "  version scores: {}", table.join(" "));
        for e in &lib.evidence {
            let _ = writeln!(
                out,
                "  unit {} ({}) channel {} score {} pairs {} features {}",
                e.unit,
                e.version,
                channel_label(e.channel),
                e.score,
                e.matched_pairs,
                e.matched_features
            );
        }
    }
    out
}

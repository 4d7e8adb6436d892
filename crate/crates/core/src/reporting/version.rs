use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A `major.minor.patch` version. Missing components read as 0 and
/// non-numeric suffixes such as `-rc1` are ignored; the original text is
/// kept in `raw`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Version {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
    pub raw: String,
}

impl Version {
    pub fn parse(text: &str) -> Result<Self> {
        let err = || Error::VersionParse(text.to_string());
        let trimmed = text.trim();
        let body = trimmed
            .strip_prefix('v')
            .or_else(|| trimmed.strip_prefix('V'))
            .unwrap_or(trimmed);
        let mut parts = [0u64; 3];
        for (i, component) in body.split('.').take(3).enumerate() {
            let digits_end = component.find(|c: char| !c.is_ascii_digit()).unwrap_or(component.len());
            if digits_end == 0 {
                if i == 0 {
                    return Err(err());
                }
                break;
            }
            parts[i] = component[..digits_end].parse().map_err(|_| err())?;
            if digits_end < component.len() {
                break;
            }
        }
        Ok(Self {
            major: parts[0],
            minor: parts[1],
            patch: parts[2],
            raw: text.to_string(),
        })
    }

    pub fn triple(&self) -> (u64, u64, u64) {
        (self.major, self.minor, self.patch)
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        self.triple()
            .cmp(&other.triple())
            .then_with(|| self.raw.cmp(&other.raw))
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FromStr for Version {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl Serialize for Version {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for Version {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Version::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// Weights applied to the major, minor and patch differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VersionDistanceWeights {
    pub major: f64,
    pub minor: f64,
    pub patch: f64,
}

impl Default for VersionDistanceWeights {
    fn default() -> Self {
        Self {
            major: 10.0,
            minor: 1.0,
            patch: 0.1,
        }
    }
}

/// Weighted L1 distance between version triples.
pub fn version_distance(a: &Version, b: &Version, w: &VersionDistanceWeights) -> f64 {
    w.major * a.major.abs_diff(b.major) as f64
        + w.minor * a.minor.abs_diff(b.minor) as f64
        + w.patch * a.patch.abs_diff(b.patch) as f64
}

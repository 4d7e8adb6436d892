//! JSON feature manifests: one document per binary.
//!
//! ```json
//! {
//!   "binary_id": "libfoo.so.1",
//!   "strings": ["usage: foo [options]"],
//!   "exports": ["foo_init"],
//!   "functions": [
//!     { "id": "foo_init", "blocks": [[0, 1, 1, 0, 6, 2, 1], [0, 0, 0, 1, 3, 0, 0]], "edges": [[0, 1]] }
//!   ],
//!   "fcg_edges": [["foo_init", "foo_alloc"]],
//!   "library": "libfoo",
//!   "version": "1.2.3"
//! }
//! ```
//!
//! Block attributes follow [`ATTRIBUTE_NAMES`](super::ATTRIBUTE_NAMES). The
//! JSON Schema lives in `schema/manifest.schema.json` at the repository root.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::strings::ExtractOptions;
use super::{Acfg, BasicBlockAttrs, BinaryFeatureSet, Fcg, Provenance, StringLiteral, ATTRIBUTE_COUNT};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    binary_id: String,
    #[serde(default)]
    strings: Vec<String>,
    #[serde(default)]
    exports: Vec<String>,
    #[serde(default)]
    functions: Vec<ManifestFunction>,
    #[serde(default)]
    fcg_edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    library: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    version: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFunction {
    id: String,
    blocks: Vec<[f64; ATTRIBUTE_COUNT]>,
    #[serde(default)]
    edges: Vec<[usize; 2]>,
}

/// Reads and validates a manifest file.
pub fn load_manifest(path: impl AsRef<Path>, opts: &ExtractOptions) -> Result<BinaryFeatureSet> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text, opts)
}

pub fn parse_manifest(text: &str, opts: &ExtractOptions) -> Result<BinaryFeatureSet> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let m: Manifest = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::validation(path, e.into_inner().to_string())
    })?;
    from_manifest(m, opts)
}

fn from_manifest(m: Manifest, opts: &ExtractOptions) -> Result<BinaryFeatureSet> {
    if m.binary_id.is_empty() {
        return Err(Error::validation("binary_id", "must be nonempty"));
    }
    let provenance = match (m.library, m.version) {
        (Some(library), Some(version)) => Some(Provenance { library, version }),
        (None, None) => None,
        (Some(_), None) => return Err(Error::validation("version", "required when `library` is set")),
        (None, Some(_)) => return Err(Error::validation("library", "required when `version` is set")),
    };

    let mut strings = Vec::with_capacity(m.strings.len());
    for (i, s) in m.strings.into_iter().enumerate() {
        if s.contains('\0') {
            return Err(Error::validation(format!("strings[{i}]"), "contains a NUL byte"));
        }
        if s.chars().count() >= opts.min_string_len {
            strings.push(StringLiteral::new(s, &opts.weighting));
        }
    }

    let mut exports = BTreeSet::new();
    for (i, e) in m.exports.into_iter().enumerate() {
        if e.is_empty() {
            return Err(Error::validation(format!("exports[{i}]"), "must be nonempty"));
        }
        exports.insert(e);
    }

    let mut acfgs = BTreeMap::new();
    for (i, f) in m.functions.into_iter().enumerate() {
        let path = format!("functions[{i}]");
        if f.id.is_empty() {
            return Err(Error::validation(format!("{path}.id"), "must be nonempty"));
        }
        if acfgs.contains_key(&f.id) {
            return Err(Error::validation(
                format!("{path}.id"),
                format!("duplicate function id `{}`", f.id),
            ));
        }
        let blocks = f.blocks.into_iter().map(BasicBlockAttrs::from_array).collect();
        let edges = f.edges.into_iter().map(|[a, b]| (a, b)).collect();
        let acfg = Acfg::new(f.id.clone(), blocks, edges).map_err(|e| match e {
            Error::Validation { path: p, reason } => Error::validation(format!("{path}.{p}"), reason),
            other => other,
        })?;
        acfgs.insert(f.id, acfg);
    }

    let fcg = Fcg::new(acfgs.keys().cloned(), m.fcg_edges)?;
    BinaryFeatureSet::new(m.binary_id, strings, exports, acfgs, fcg, provenance)
}

fn to_manifest(fs: &BinaryFeatureSet) -> Manifest {
    Manifest {
        binary_id: fs.binary_id.clone(),
        strings: fs.strings.iter().map(|s| s.value.clone()).collect(),
        exports: fs.exports.iter().cloned().collect(),
        functions: fs
            .acfgs
            .values()
            .map(|a| ManifestFunction {
                id: a.function.clone(),
                blocks: a.blocks.iter().map(|b| b.to_array()).collect(),
                edges: a.edges.iter().map(|&(x, y)| [x, y]).collect(),
            })
            .collect(),
        fcg_edges: fs.fcg.edges.iter().cloned().collect(),
        library: fs.provenance.as_ref().map(|p| p.library.clone()),
        version: fs.provenance.as_ref().map(|p| p.version.clone()),
    }
}

/// Serializes a feature set in manifest form. String weights are not
/// stored; they are recomputed on load.
pub fn to_manifest_json(fs: &BinaryFeatureSet) -> String {
    serde_json::to_string(&to_manifest(fs)).expect("manifest serialization is infallible")
}

pub fn write_manifest(fs: &BinaryFeatureSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_manifest_json(fs))?;
    Ok(())
}

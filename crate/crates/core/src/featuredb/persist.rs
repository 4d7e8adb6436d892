//! On-disk layout:
//!
//! ```text
//! meta.json        libraries → versions → units, unit table, model fingerprint
//! index.bin        inverted index
//! vectors.bin      row-major f64 matrix followed by the row id table
//! units/NNNNNN.bin per-unit FCG and vector rows
//! checksums.json   SHA-256 of every file above
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FeatureDb, InvertedIndex, UnitPayload, UnitRef, VectorId, VectorStore};
use crate::error::{Error, Result};
use crate::reporting::Version;

const FORMAT_VERSION: u32 = 1;
const VECTOR_MAGIC: &[u8; 8] = b"TPLVEC01";
const META: &str = "meta.json";
const INDEX: &str = "index.bin";
const VECTORS: &str = "vectors.bin";
const CHECKSUMS: &str = "checksums.json";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    format_version: u32,
    model_fingerprint: Option<String>,
    libraries: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    units: Vec<UnitRef>,
}

fn unit_file(idx: usize) -> String {
    format!("units/{idx:06}.bin")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn corrupt(file: &str, detail: impl std::fmt::Display) -> Error {
    Error::Integrity(format!("{file}: {detail}"))
}

fn encode_vectors(store: &VectorStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + store.data().len() * 8);
    out.extend_from_slice(VECTOR_MAGIC);
    out.write_u32::<LittleEndian>(store.dim() as u32).unwrap();
    out.write_u64::<LittleEndian>(store.len() as u64).unwrap();
    for &x in store.data() {
        out.write_f64::<LittleEndian>(x).unwrap();
    }
    for id in store.ids() {
        for s in [&id.function, &id.unit] {
            out.write_u32::<LittleEndian>(s.len() as u32).unwrap();
            out.extend_from_slice(s.as_bytes());
        }
    }
    out
}

fn decode_vectors(bytes: &[u8]) -> Result<VectorStore> {
    let bad = |e: std::io::Error| corrupt(VECTORS, e);
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(bad)?;
    if &magic != VECTOR_MAGIC {
        return Err(corrupt(VECTORS, "bad magic"));
    }
    let dim = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
    let count = r.read_u64::<LittleEndian>().map_err(bad)? as usize;
    let values = dim
        .checked_mul(count)
        .filter(|&n| n.saturating_mul(8) <= bytes.len())
        .ok_or_else(|| corrupt(VECTORS, "matrix size exceeds file"))?;
    let mut data = vec![0.0; values];
    r.read_f64_into::<LittleEndian>(&mut data).map_err(bad)?;
    let read_str = |r: &mut Cursor<&[u8]>| -> Result<String> {
        let len = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        if len > bytes.len() {
            return Err(corrupt(VECTORS, "string length exceeds file"));
        }
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(bad)?;
        String::from_utf8(buf).map_err(|e| corrupt(VECTORS, e))
    };
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        let function = read_str(&mut r)?;
        let unit = read_str(&mut r)?;
        ids.push(VectorId { function, unit });
    }
    if (r.position() as usize) != bytes.len() {
        return Err(corrupt(VECTORS, "trailing bytes"));
    }
    VectorStore::from_parts(dim, data, ids)
}

impl FeatureDb {
    /// Writes the database into directory `dir`, creating it if needed and
    /// replacing any database already there.
    pub fn persist(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let units_dir = dir.join("units");
        if units_dir.exists() {
            fs::remove_dir_all(&units_dir)?;
        }
        fs::create_dir_all(&units_dir)?;

        let meta = Meta {
            format_version: FORMAT_VERSION,
            model_fingerprint: self.model_fingerprint.clone(),
            libraries: self
                .hierarchy()
                .into_iter()
                .map(|(l, vs)| {
                    let vs = vs
                        .into_iter()
                        .map(|(v, us)| (v.to_string(), us.into_iter().map(str::to_string).collect()))
                        .collect();
                    (l.to_string(), vs)
                })
                .collect(),
            units: self.units.clone(),
        };

        let mut files: Vec<(String, Vec<u8>)> = vec![
            (META.into(), serde_json::to_vec_pretty(&meta)?),
            (
                INDEX.into(),
                bincode::serialize(&self.index).map_err(|e| corrupt(INDEX, e))?,
            ),
            (VECTORS.into(), encode_vectors(&self.store)),
        ];
        for (i, p) in self.payloads.iter().enumerate() {
            let name = unit_file(i);
            let bytes = bincode::serialize(p).map_err(|e| corrupt(&name, e))?;
            files.push((name, bytes));
        }

        let mut sums = BTreeMap::new();
        for (name, bytes) in &files {
            fs::write(dir.join(name), bytes)?;
            sums.insert(name.clone(), sha256_hex(bytes));
        }
        fs::write(dir.join(CHECKSUMS), serde_json::to_vec_pretty(&sums)?)?;
        Ok(())
    }

    /// Loads a database written by [`FeatureDb::persist`], verifying every
    /// file against its recorded checksum.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let sums_bytes = fs::read(dir.join(CHECKSUMS)).map_err(|e| corrupt(CHECKSUMS, e))?;
        let sums: BTreeMap<String, String> = serde_json::from_slice(&sums_bytes).map_err(|e| corrupt(CHECKSUMS, e))?;

        let read = |name: &str| -> Result<Vec<u8>> {
            let expected = sums.get(name).ok_or_else(|| corrupt(name, "no checksum recorded"))?;
            let bytes = fs::read(dir.join(name)).map_err(|e| corrupt(name, e))?;
            let actual = sha256_hex(&bytes);
            if &actual != expected {
                return Err(corrupt(
                    name,
                    format!(
                        "checksum mismatch: expected {expected}, found {actual} ({} bytes)",
                        bytes.len()
                    ),
                ));
            }
            Ok(bytes)
        };

        let meta: Meta = serde_json::from_slice(&read(META)?).map_err(|e| corrupt(META, e))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(corrupt(
                META,
                format!("unsupported format version {}", meta.format_version),
            ));
        }
        let index: InvertedIndex = bincode::deserialize(&read(INDEX)?).map_err(|e| corrupt(INDEX, e))?;
        let store = decode_vectors(&read(VECTORS)?)?;

        let n = meta.units.len();
        let mut payloads = Vec::with_capacity(n);
        for i in 0..n {
            let name = unit_file(i);
            let p: UnitPayload = bincode::deserialize(&read(&name)?).map_err(|e| corrupt(&name, e))?;
            if p.vectors.values().any(|&row| row as usize >= store.len()) {
                return Err(corrupt(&name, "vector row out of range"));
            }
            payloads.push(p);
        }
        if index.totals.len() != n {
            return Err(corrupt(
                INDEX,
                format!("{} unit totals for {n} units", index.totals.len()),
            ));
        }
        if index.postings.values().flat_map(|p| &p.units).any(|&u| u as usize >= n) {
            return Err(corrupt(INDEX, "posting references unknown unit"));
        }

        let mut by_id = HashMap::with_capacity(n);
        let mut versions = Vec::with_capacity(n);
        for (i, u) in meta.units.iter().enumerate() {
            if by_id.insert(u.unit.clone(), i as u32).is_some() {
                return Err(corrupt(META, format!("duplicate unit `{}`", u.unit)));
            }
            versions.push(Version::parse(&u.version)?);
        }

        Ok(FeatureDb {
            units: meta.units,
            versions,
            by_id,
            index,
            store,
            payloads,
            model_fingerprint: meta.model_fingerprint,
        })
    }
}

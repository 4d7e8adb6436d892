//! Seeded synthetic corpus: library units, fused targets and their ground
//! truth, plus labelled function pairs for training.
//!
//! Every library owns distinctive strings, exported names and randomly
//! structured functions, and calls into a few functions of a shared
//! runtime pool that only statically linked targets carry. Later versions
//! mutate the previous one. A target fuses `fan_in` library units whose
//! functions were "recompiled" (block attributes jittered, control-flow
//! edges edited), renames every function, adds project code and finally
//! strips a proportion of its basic features.
//!
//! Random streams are split by purpose so that, for instance, the library
//! units and the targets' graphs do not depend on `strip`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedding::{PairLabel, TrainingPair};
use crate::error::{Error, Result};
use crate::extraction::{
    write_manifest, Acfg, BasicBlockAttrs, BinaryFeatureSet, Fcg, FunctionId, Provenance, StringLiteral,
    StringWeighting,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub seed: u64,
    pub libraries: usize,
    pub versions_per_library: usize,
    /// Mean function count of a library unit.
    pub functions_per_unit: usize,
    /// Mean distinctive string count of a library unit.
    pub strings_per_unit: usize,
    /// Libraries fused into each target.
    pub fan_in: usize,
    pub targets: usize,
    /// Proportion of each target's basic features removed.
    pub strip: f64,
    /// Strength of the recompilation perturbation, in `[0, 1]`.
    pub perturbation: f64,
    pub training_pairs: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 20_240_501,
            libraries: 50,
            versions_per_library: 3,
            functions_per_unit: 24,
            strings_per_unit: 24,
            fan_in: 3,
            targets: 40,
            strip: 0.3,
            perturbation: 0.3,
            training_pairs: 4000,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("libraries", self.libraries),
            ("versions_per_library", self.versions_per_library),
            ("functions_per_unit", self.functions_per_unit),
            ("strings_per_unit", self.strings_per_unit),
            ("fan_in", self.fan_in),
            ("targets", self.targets),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.fan_in > self.libraries {
            return Err(Error::Config("fan_in exceeds the library count".into()));
        }
        for (name, v) in [("strip", self.strip), ("perturbation", self.perturbation)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TruthEntry {
    pub library: String,
    pub version: String,
}

/// Target id → libraries (with versions) fused into it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth(pub BTreeMap<String, Vec<TruthEntry>>);

impl GroundTruth {
    pub fn libraries(&self, target: &str) -> BTreeSet<String> {
        self.0
            .get(target)
            .map(|es| es.iter().map(|e| e.library.clone()).collect())
            .unwrap_or_default()
    }

    pub fn version(&self, target: &str, library: &str) -> Option<&str> {
        self.0
            .get(target)?
            .iter()
            .find(|e| e.library == library)
            .map(|e| e.version.as_str())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub units: Vec<BinaryFeatureSet>,
    pub targets: Vec<BinaryFeatureSet>,
    pub truth: GroundTruth,
    pub training_pairs: Vec<TrainingPair>,
}

impl Corpus {
    /// Writes `db/*.json` and `targets/*.json` manifests, `ground_truth.json`,
    /// `training_pairs.json` and `corpus.json` (the spec) under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (sub, sets) in [("db", &self.units), ("targets", &self.targets)] {
            let d = dir.join(sub);
            fs::create_dir_all(&d)?;
            for fs_ in sets {
                write_manifest(fs_, d.join(format!("{}.json", fs_.binary_id)))?;
            }
        }
        fs::write(
            dir.join("ground_truth.json"),
            serde_json::to_string_pretty(&self.truth)?,
        )?;
        fs::write(
            dir.join("training_pairs.json"),
            serde_json::to_string(&self.training_pairs)?,
        )?;
        fs::write(dir.join("corpus.json"), serde_json::to_string_pretty(&self.spec)?)?;
        Ok(())
    }
}

/// Reads and validates a `training_pairs.json` file.
pub fn load_training_pairs(path: impl AsRef<Path>) -> Result<Vec<TrainingPair>> {
    let pairs: Vec<TrainingPair> = serde_json::from_str(&fs::read_to_string(path)?)?;
    pairs
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let check = |a: Acfg, side: &str| {
                Acfg::new(a.function, a.blocks, a.edges).map_err(|e| match e {
                    Error::Validation { path, reason } => Error::validation(format!("[{i}].{side}.{path}"), reason),
                    other => other,
                })
            };
            Ok(TrainingPair {
                a: check(p.a, "a")?,
                b: check(p.b, "b")?,
                label: p.label,
            })
        })
        .collect()
}

const WORDS: &[&str] = &[
    "alpha", "buffer", "cache", "decode", "encode", "frame", "glyph", "header", "index", "journal", "kernel", "layer",
    "matrix", "node", "offset", "packet", "query", "record", "stream", "table", "unit", "vector", "window", "xform",
    "yield", "zone", "archive", "block", "chunk", "digest", "entry", "filter", "group", "hash", "image", "join", "key",
    "list", "map", "name", "object", "page", "queue", "range", "scan", "token", "upper", "value", "width", "align",
    "bound", "channel", "delta", "event", "field", "gamma", "handle", "input", "jitter", "kind", "level", "merge",
    "number", "order", "parse", "quota", "reset", "state", "timer", "update", "verify", "write", "cursor", "socket",
    "thread", "mutex", "signal", "option", "config", "plugin", "module", "symbol", "string", "format", "locale",
    "color", "pixel", "sample", "codec", "audio", "video", "texture", "shader", "matrix", "cipher", "random", "secure",
    "session", "client", "server", "request", "response", "parser", "lexer", "syntax", "schema", "folder", "volume",
];

const MESSAGES: &[&str] = &[
    "out of memory",
    "invalid argument",
    "unexpected end of file",
    "permission denied",
    "operation not supported",
    "resource temporarily unavailable",
    "bad file descriptor",
    "broken pipe",
    "connection reset by peer",
    "no such file or directory",
    "%s: %s\n",
    "assertion failed: %s",
    "internal error at %s:%d",
    "cannot allocate buffer",
    "value out of range",
    "checksum mismatch",
    "unsupported version",
    "malformed input",
    "timeout expired",
    "illegal state",
];

const RUNTIME_POOL: usize = 30;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn word(rng: &mut ChaCha8Rng) -> &'static str {
    WORDS.choose(rng).expect("word list is nonempty")
}

fn random_string(rng: &mut ChaCha8Rng, lib: &str) -> String {
    let n = rng.random_range(3..=6);
    let phrase = (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ");
    match rng.random_range(0..10) {
        0 => format!("/usr/share/{lib}/{}.conf", word(rng)),
        1 => format!("https://{}.{lib}.org/{}", word(rng), word(rng)),
        2 => format!("{lib}: {phrase} %d"),
        _ => phrase,
    }
}

fn block_count(rng: &mut ChaCha8Rng) -> usize {
    if rng.random_bool(0.2) {
        rng.random_range(1..=4)
    } else {
        rng.random_range(5..=24)
    }
}

/// Block archetype: instruction count, arithmetic share, numeric
/// constants, calls and string references.
#[derive(Clone, Copy)]
struct BlockKind {
    instructions: f64,
    arithmetic: f64,
    numeric: f64,
    calls: f64,
    strings: f64,
}

fn palette() -> Vec<BlockKind> {
    let mut out = Vec::with_capacity(162);
    for instructions in [2.0, 6.0, 18.0] {
        for arithmetic in [0.05, 0.4, 0.8] {
            for numeric in [0.0, 2.0, 6.0] {
                for calls in [0.0, 1.0, 2.0] {
                    for strings in [0.0, 1.0] {
                        out.push(BlockKind {
                            instructions,
                            arithmetic,
                            numeric,
                            calls,
                            strings,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Per-function generation profile: a sparse mixture over block kinds
/// plus branchiness.
struct Style {
    kinds: Vec<(BlockKind, f64)>,
    branch: f64,
    back: f64,
    jump: f64,
}

impl Style {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let all = palette();
        let k = rng.random_range(2..=3);
        let kinds = index::sample(rng, all.len(), k)
            .into_iter()
            .map(|i| (all[i], rng.random_range(0.2..1.0)))
            .collect();
        Self {
            kinds,
            branch: rng.random_range(0.1..0.5),
            back: rng.random_range(0.0..0.2),
            jump: rng.random_range(0.0..0.1),
        }
    }

    fn kind(&self, rng: &mut ChaCha8Rng) -> BlockKind {
        self.kinds
            .choose_weighted(rng, |k| k.1)
            .expect("weights are positive")
            .0
    }
}

/// A random structured control-flow graph with `n` blocks.
pub fn random_acfg(rng: &mut ChaCha8Rng, id: &str, n: usize) -> Acfg {
    let style = Style::random(rng);
    let mut edges = Vec::new();
    let mut transfers = vec![0.0; n];
    for (i, transfer) in transfers.iter_mut().enumerate().take(n.saturating_sub(1)) {
        let r: f64 = rng.random();
        if r < style.branch && i + 2 < n {
            edges.push((i, i + 1));
            edges.push((i, rng.random_range(i + 2..n)));
            *transfer = 1.0;
        } else if r < style.branch + style.back && i > 0 {
            edges.push((i, i + 1));
            edges.push((i, rng.random_range(0..=i)));
            *transfer = 1.0;
        } else if r < style.branch + style.back + style.jump && i + 2 < n {
            edges.push((i, rng.random_range(i + 2..n)));
            *transfer = 1.0;
        } else {
            edges.push((i, i + 1));
        }
    }
    let blocks = (0..n)
        .map(|i| {
            let k = style.kind(rng);
            let instructions = (k.instructions * rng.random_range(0.8..1.2)).round().max(1.0);
            let arithmetic = (instructions * k.arithmetic * rng.random_range(0.8..1.2)).round();
            BasicBlockAttrs {
                string_constants: k.strings,
                numeric_constants: (k.numeric * rng.random_range(0.7..1.3)).round(),
                transfer_instructions: transfers[i],
                call_instructions: k.calls,
                instructions,
                arithmetic_instructions: arithmetic.min(instructions),
                offspring: 0.0,
            }
        })
        .collect();
    let mut acfg = Acfg::new(id, blocks, edges).expect("generated graph is consistent");
    acfg.refresh_offspring();
    acfg
}

/// A "recompiled" variant of `acfg`: instruction-like counts are rescaled by
/// a per-function factor and jittered per block, and about
/// `strength * n / 4` control-flow edits split, add or remove edges.
pub fn recompile(acfg: &Acfg, strength: f64, rng: &mut ChaCha8Rng, id: &str) -> Acfg {
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let factor = (0.5 * strength * unit.sample(rng)).exp();
    let jitter =
        |c: f64, min: f64, rng: &mut ChaCha8Rng| -> f64 { (c * factor + strength * unit.sample(rng)).round().max(min) };
    let mut blocks: Vec<BasicBlockAttrs> = acfg
        .blocks
        .iter()
        .map(|b| {
            let instructions = jitter(b.instructions, 1.0, rng);
            BasicBlockAttrs {
                instructions,
                arithmetic_instructions: jitter(b.arithmetic_instructions, 0.0, rng).min(instructions),
                numeric_constants: jitter(b.numeric_constants, 0.0, rng),
                ..*b
            }
        })
        .collect();
    let mut edges: Vec<(usize, usize)> = acfg.edges.clone();
    let n = blocks.len();
    let edits = (strength * n as f64 / 4.0).round() as usize;
    for _ in 0..edits {
        let op: f64 = rng.random();
        if op < 0.6 && !edges.is_empty() {
            let k = rng.random_range(0..edges.len());
            let (u, v) = edges.swap_remove(k);
            let w = blocks.len();
            blocks.push(BasicBlockAttrs {
                instructions: rng.random_range(1..=3) as f64,
                transfer_instructions: 1.0,
                ..BasicBlockAttrs::default()
            });
            edges.push((u, w));
            edges.push((w, v));
        } else if op < 0.8 && blocks.len() > 1 {
            let u = rng.random_range(0..blocks.len() - 1);
            let v = rng.random_range(u + 1..blocks.len());
            edges.push((u, v));
        } else if !edges.is_empty() {
            let k = rng.random_range(0..edges.len());
            let src = edges[k].0;
            if edges.iter().filter(|e| e.0 == src).count() > 1 {
                edges.swap_remove(k);
            }
        }
    }
    let mut out = Acfg::new(id, blocks, edges).expect("perturbed graph is consistent");
    out.refresh_offspring();
    out
}

/// `count` labelled pairs built from fresh random functions: similar pairs
/// are two independent recompilations of one function, dissimilar pairs
/// recompile two unrelated functions.
pub fn perturbation_pairs(seed: u64, stream: u64, count: usize, strength: f64) -> Vec<TrainingPair> {
    let mut rng = stream_rng(seed, stream);
    let fresh = |rng: &mut ChaCha8Rng, i: usize, tag: &str| {
        let n = rng.random_range(5..=24);
        random_acfg(rng, &format!("p{i}_{tag}"), n)
    };
    (0..count)
        .map(|i| {
            let f = fresh(&mut rng, i, "f");
            if i % 2 == 0 {
                TrainingPair {
                    a: recompile(&f, strength, &mut rng, &format!("p{i}_a")),
                    b: recompile(&f, strength, &mut rng, &format!("p{i}_b")),
                    label: PairLabel::Similar,
                }
            } else {
                let g = fresh(&mut rng, i, "g");
                TrainingPair {
                    a: recompile(&f, strength, &mut rng, &format!("p{i}_a")),
                    b: recompile(&g, strength, &mut rng, &format!("p{i}_b")),
                    label: PairLabel::Dissimilar,
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
struct UnitModel {
    version: String,
    functions: BTreeMap<FunctionId, Acfg>,
    calls: BTreeSet<(FunctionId, FunctionId)>,
    exports: BTreeSet<FunctionId>,
    strings: Vec<String>,
    runtime: BTreeSet<FunctionId>,
}

struct Library {
    name: String,
    units: Vec<UnitModel>,
}

struct Runtime {
    functions: Vec<Acfg>,
    strings: Vec<String>,
}

fn runtime_id(k: usize) -> FunctionId {
    format!("__rt_{k:02}")
}

fn build_runtime(seed: u64) -> Runtime {
    let mut rng = stream_rng(seed, 1);
    let functions = (0..RUNTIME_POOL)
        .map(|k| {
            let n = rng.random_range(5..=16);
            random_acfg(&mut rng, &runtime_id(k), n)
        })
        .collect();
    Runtime {
        functions,
        strings: MESSAGES.iter().map(|s| s.to_string()).collect(),
    }
}

fn bump_version(rng: &mut ChaCha8Rng, (ma, mi, pa): (u64, u64, u64)) -> (u64, u64, u64) {
    let r: f64 = rng.random();
    if r < 0.6 {
        (ma, mi, pa + rng.random_range(1..=3))
    } else if r < 0.9 {
        (ma, mi + 1, rng.random_range(0..=2))
    } else {
        (ma + 1, 0, 0)
    }
}

fn scaled(rng: &mut ChaCha8Rng, mean: usize) -> usize {
    let lo = (mean * 3 / 4).max(1);
    let hi = (mean * 5 / 4).max(lo);
    rng.random_range(lo..=hi)
}

fn build_library(spec: &CorpusSpec, runtime: &Runtime, i: usize) -> Library {
    let mut rng = stream_rng(spec.seed, 1000 + i as u64);
    let stem = format!("{}{i:02}", word(&mut rng));
    let name = format!("lib{stem}");

    let n = scaled(&mut rng, spec.functions_per_unit);
    let ids: Vec<FunctionId> = (0..n).map(|j| format!("{stem}_{}_{j}", word(&mut rng))).collect();
    let mut functions = BTreeMap::new();
    for id in &ids {
        let b = block_count(&mut rng);
        functions.insert(id.clone(), random_acfg(&mut rng, id, b));
    }
    let linked = rng.random_range(6..=10);
    let runtime_ids: BTreeSet<FunctionId> = index::sample(&mut rng, RUNTIME_POOL, linked)
        .into_iter()
        .map(runtime_id)
        .collect();
    let runtime_list: Vec<&FunctionId> = runtime_ids.iter().collect();
    let mut calls = BTreeSet::new();
    for j in 0..n {
        if j + 1 < n {
            for _ in 0..rng.random_range(1..=3) {
                calls.insert((ids[j].clone(), ids[rng.random_range(j + 1..n)].clone()));
            }
        }
        if j > 0 && rng.random_bool(0.05) {
            calls.insert((ids[j].clone(), ids[rng.random_range(0..j)].clone()));
        }
        if rng.random_bool(0.35) {
            let rt = *runtime_list.choose(&mut rng).expect("runtime subset is nonempty");
            calls.insert((ids[j].clone(), rt.clone()));
        }
    }
    let exports = ids
        .iter()
        .enumerate()
        .filter(|&(j, _)| j < n / 3 || rng.random_bool(0.15))
        .map(|(_, id)| id.clone())
        .collect();
    let mut strings: Vec<String> = (0..scaled(&mut rng, spec.strings_per_unit))
        .map(|_| random_string(&mut rng, &stem))
        .collect();
    let common = rng.random_range(2..=5);
    strings.extend(runtime.strings.choose_multiple(&mut rng, common).cloned());

    let mut version = (
        rng.random_range(0..=3),
        rng.random_range(0..=12),
        rng.random_range(0..=20),
    );
    let mut unit = UnitModel {
        version: String::new(),
        functions,
        calls,
        exports,
        strings,
        runtime: runtime_ids,
    };
    let mut units = Vec::with_capacity(spec.versions_per_library);
    let mut next_fn = n;
    for v in 0..spec.versions_per_library {
        if v > 0 {
            version = bump_version(&mut rng, version);
            mutate(&mut rng, &mut unit, &stem, &mut next_fn);
        }
        unit.version = format!("{}.{}.{}", version.0, version.1, version.2);
        units.push(unit.clone());
    }
    Library { name, units }
}

fn mutate(rng: &mut ChaCha8Rng, unit: &mut UnitModel, stem: &str, next_fn: &mut usize) {
    for s in unit.strings.iter_mut() {
        if rng.random_bool(0.1) {
            *s = random_string(rng, stem);
        }
    }
    for _ in 0..rng.random_range(0..=2) {
        unit.strings.push(random_string(rng, stem));
    }

    let ids: Vec<FunctionId> = unit.functions.keys().cloned().collect();
    for id in &ids {
        let r: f64 = rng.random();
        if r < 0.2 {
            let b = block_count(rng);
            unit.functions.insert(id.clone(), random_acfg(rng, id, b));
        } else if r < 0.4 {
            let tweaked = recompile(&unit.functions[id], 0.15, rng, id);
            unit.functions.insert(id.clone(), tweaked);
        }
    }

    let internal: Vec<&FunctionId> = ids.iter().filter(|id| !unit.exports.contains(*id)).collect();
    let removals = rng.random_range(0..=2).min(internal.len());
    let removed: Vec<FunctionId> = internal
        .choose_multiple(rng, removals)
        .map(|id| (*id).clone())
        .collect();
    for id in &removed {
        let callers: Vec<FunctionId> = unit
            .calls
            .iter()
            .filter(|(_, b)| b == id)
            .map(|(a, _)| a.clone())
            .collect();
        let callees: Vec<FunctionId> = unit
            .calls
            .iter()
            .filter(|(a, _)| a == id)
            .map(|(_, b)| b.clone())
            .collect();
        unit.calls.retain(|(a, b)| a != id && b != id);
        for a in &callers {
            for b in &callees {
                if a != b {
                    unit.calls.insert((a.clone(), b.clone()));
                }
            }
        }
        unit.functions.remove(id);
    }

    let existing: Vec<FunctionId> = unit.functions.keys().cloned().collect();
    for _ in 0..rng.random_range(1..=3) {
        let id = format!("{stem}_{}_{}", word(rng), *next_fn);
        *next_fn += 1;
        let b = block_count(rng);
        unit.functions.insert(id.clone(), random_acfg(rng, &id, b));
        let caller = existing.choose(rng).expect("units keep functions").clone();
        unit.calls.insert((caller, id.clone()));
        for _ in 0..rng.random_range(0..=2) {
            let callee = existing.choose(rng).expect("units keep functions").clone();
            unit.calls.insert((id.clone(), callee));
        }
    }
}

fn unit_feature_set(lib: &Library, unit: &UnitModel) -> BinaryFeatureSet {
    let weighting = StringWeighting::default();
    let acfgs = unit.functions.clone();
    let calls = unit
        .calls
        .iter()
        .filter(|(a, b)| acfgs.contains_key(a) && acfgs.contains_key(b))
        .cloned();
    let fcg = Fcg::new(acfgs.keys().cloned(), calls).expect("unit call graph is closed");
    BinaryFeatureSet::new(
        format!("{}-{}.so", lib.name, unit.version),
        unit.strings
            .iter()
            .map(|s| StringLiteral::new(s.clone(), &weighting))
            .collect(),
        unit.exports.clone(),
        acfgs,
        fcg,
        Some(Provenance {
            library: lib.name.clone(),
            version: unit.version.clone(),
        }),
    )
    .expect("generated unit is consistent")
}

fn build_target(
    spec: &CorpusSpec,
    libraries: &[Library],
    runtime: &Runtime,
    t: usize,
) -> (BinaryFeatureSet, Vec<TruthEntry>) {
    let mut rng = stream_rng(spec.seed, 100_000 + t as u64);
    let picks = index::sample(&mut rng, libraries.len(), spec.fan_in).into_vec();
    let mut truth = Vec::with_capacity(picks.len());
    let mut sources: BTreeMap<(usize, FunctionId), Acfg> = BTreeMap::new();
    let mut calls: BTreeSet<((usize, FunctionId), (usize, FunctionId))> = BTreeSet::new();
    let mut strings: BTreeSet<String> = BTreeSet::new();
    let mut exports: BTreeSet<String> = BTreeSet::new();
    let mut library_exports: Vec<(usize, FunctionId)> = Vec::new();
    // Runtime functions are shared, so they are keyed under `usize::MAX`.
    let key = |lib: usize, id: &FunctionId| {
        if id.starts_with("__rt_") {
            (usize::MAX, id.clone())
        } else {
            (lib, id.clone())
        }
    };

    for &li in &picks {
        let lib = &libraries[li];
        let unit = &lib.units[rng.random_range(0..lib.units.len())];
        truth.push(TruthEntry {
            library: lib.name.clone(),
            version: unit.version.clone(),
        });
        let kept: BTreeSet<&FunctionId> = unit.functions.keys().filter(|_| rng.random_bool(0.9)).collect();
        for id in &kept {
            sources.insert(key(li, id), unit.functions[*id].clone());
            if unit.exports.contains(*id) {
                exports.insert((*id).clone());
                library_exports.push(key(li, id));
            }
        }
        for id in &unit.runtime {
            let k: usize = id.trim_start_matches("__rt_").parse().expect("runtime id");
            sources.insert(key(li, id), runtime.functions[k].clone());
        }
        for (a, b) in &unit.calls {
            let a_in = kept.contains(a) || unit.runtime.contains(a);
            let b_in = kept.contains(b) || unit.runtime.contains(b);
            if a_in && b_in {
                calls.insert((key(li, a), key(li, b)));
            }
        }
        strings.extend(unit.strings.iter().cloned());
    }

    let junk_count = (spec.functions_per_unit / 2).max(1);
    let runtime_keys: Vec<(usize, FunctionId)> = sources.keys().filter(|k| k.0 == usize::MAX).cloned().collect();
    let junk_keys: Vec<(usize, FunctionId)> = (0..junk_count).map(|j| (usize::MAX - 1, format!("junk_{j}"))).collect();
    for (j, k) in junk_keys.iter().enumerate() {
        let b = block_count(&mut rng);
        sources.insert(k.clone(), random_acfg(&mut rng, &k.1, b));
        if j + 1 < junk_keys.len() {
            calls.insert((k.clone(), junk_keys[rng.random_range(j + 1..junk_keys.len())].clone()));
        }
        if let Some(e) = library_exports.choose(&mut rng) {
            calls.insert((k.clone(), e.clone()));
        }
        if rng.random_bool(0.3) {
            if let Some(r) = runtime_keys.choose(&mut rng) {
                calls.insert((k.clone(), r.clone()));
            }
        }
    }
    let project = format!("app{t:03}");
    for _ in 0..rng.random_range(5..=10) {
        strings.insert(random_string(&mut rng, &project));
    }
    let common = rng.random_range(2..=4);
    for s in runtime.strings.choose_multiple(&mut rng, common) {
        strings.insert(s.clone());
    }
    for j in 0..rng.random_range(2..=4) {
        exports.insert(format!("{project}_{}_{j}", word(&mut rng)));
    }

    let mut order: Vec<&(usize, FunctionId)> = sources.keys().collect();
    order.shuffle(&mut rng);
    let rename: BTreeMap<&(usize, FunctionId), FunctionId> = order
        .into_iter()
        .enumerate()
        .map(|(i, k)| (k, format!("sub_{i:04}")))
        .collect();
    let mut acfgs = BTreeMap::new();
    for (k, acfg) in &sources {
        let id = rename[k].clone();
        acfgs.insert(id.clone(), recompile(acfg, spec.perturbation, &mut rng, &id));
    }
    let edges = calls.iter().map(|(a, b)| (rename[a].clone(), rename[b].clone()));
    let fcg = Fcg::new(acfgs.keys().cloned(), edges).expect("target call graph is closed");

    let mut strip_rng = stream_rng(spec.seed, 200_000 + t as u64);
    let features: Vec<(bool, String)> = strings
        .into_iter()
        .map(|s| (true, s))
        .chain(exports.into_iter().map(|e| (false, e)))
        .collect();
    let removed = (spec.strip * features.len() as f64).round() as usize;
    let dropped: BTreeSet<usize> = index::sample(&mut strip_rng, features.len(), removed.min(features.len()))
        .into_iter()
        .collect();
    let weighting = StringWeighting::default();
    let mut kept_strings = Vec::new();
    let mut kept_exports = BTreeSet::new();
    for (i, (is_string, f)) in features.into_iter().enumerate() {
        if dropped.contains(&i) {
            continue;
        }
        if is_string {
            kept_strings.push(StringLiteral::new(f, &weighting));
        } else {
            kept_exports.insert(f);
        }
    }

    let fs = BinaryFeatureSet::new(format!("target-{t:03}"), kept_strings, kept_exports, acfgs, fcg, None)
        .expect("generated target is consistent");
    truth.sort();
    (fs, truth)
}

/// Generates the corpus described by `spec`. Identical specs give identical
/// corpora.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let runtime = build_runtime(spec.seed);
    let libraries: Vec<Library> = (0..spec.libraries).map(|i| build_library(spec, &runtime, i)).collect();
    let units = libraries
        .iter()
        .flat_map(|lib| lib.units.iter().map(|u| unit_feature_set(lib, u)))
        .collect();
    let mut targets = Vec::with_capacity(spec.targets);
    let mut truth = BTreeMap::new();
    for t in 0..spec.targets {
        let (fs, entries) = build_target(spec, &libraries, &runtime, t);
        truth.insert(fs.binary_id.clone(), entries);
        targets.push(fs);
    }
    let training_pairs = perturbation_pairs(spec.seed, 300_000, spec.training_pairs, spec.perturbation);
    Ok(Corpus {
        spec: spec.clone(),
        units,
        targets,
        truth: GroundTruth(truth),
        training_pairs,
    })
}

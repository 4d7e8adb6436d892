//! Feature extraction: everything the later stages know about a binary.
//!
//! Two sources produce a [`BinaryFeatureSet`]: [`elf::extract_elf_basics`]
//! reads string literals and exported function names straight out of an ELF
//! file, and [`manifest::load_manifest`] ingests the full feature set (ACFGs
//! and FCG included) as emitted by an external disassembler or by the
//! synthetic corpus generator.

pub mod elf;
pub mod manifest;
pub mod strings;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use elf::extract_elf_basics;
pub use manifest::{load_manifest, parse_manifest, to_manifest_json, write_manifest};
pub use strings::{ExtractOptions, StringWeighting};

pub type FunctionId = String;

/// Functions with fewer blocks than this never get an embedding.
pub const MIN_EMBED_BLOCKS: usize = 5;

/// Number of numeric attributes attached to every basic block.
pub const ATTRIBUTE_COUNT: usize = 7;

/// Attribute order used by [`BasicBlockAttrs::to_array`] and by the manifest
/// format.
pub const ATTRIBUTE_NAMES: [&str; ATTRIBUTE_COUNT] = [
    "string_constants",
    "numeric_constants",
    "transfer_instructions",
    "call_instructions",
    "instructions",
    "arithmetic_instructions",
    "offspring",
];

/// A printable string found in a binary, with the weight used by the
/// weighted basic-feature rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringLiteral {
    pub value: String,
    pub weight: f64,
}

impl StringLiteral {
    pub fn new(value: impl Into<String>, weighting: &StringWeighting) -> Self {
        let value = value.into();
        let weight = weighting.weight(&value);
        Self { value, weight }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BasicBlockAttrs {
    pub string_constants: f64,
    pub numeric_constants: f64,
    pub transfer_instructions: f64,
    pub call_instructions: f64,
    pub instructions: f64,
    pub arithmetic_instructions: f64,
    /// Number of blocks reachable from this block.
    pub offspring: f64,
}

impl BasicBlockAttrs {
    pub fn to_array(&self) -> [f64; ATTRIBUTE_COUNT] {
        [
            self.string_constants,
            self.numeric_constants,
            self.transfer_instructions,
            self.call_instructions,
            self.instructions,
            self.arithmetic_instructions,
            self.offspring,
        ]
    }

    pub fn from_array(a: [f64; ATTRIBUTE_COUNT]) -> Self {
        Self {
            string_constants: a[0],
            numeric_constants: a[1],
            transfer_instructions: a[2],
            call_instructions: a[3],
            instructions: a[4],
            arithmetic_instructions: a[5],
            offspring: a[6],
        }
    }
}

/// Attributed control-flow graph of one function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acfg {
    pub function: FunctionId,
    pub blocks: Vec<BasicBlockAttrs>,
    /// Directed block-index pairs, sorted and deduplicated.
    pub edges: Vec<(usize, usize)>,
}

impl Acfg {
    /// Builds an ACFG, rejecting out-of-range edges and non-finite or
    /// negative attributes. Duplicate edges are collapsed. Error paths are
    /// relative to the function (`blocks[2][6]`, `edges[0]`).
    pub fn new(
        function: impl Into<FunctionId>,
        blocks: Vec<BasicBlockAttrs>,
        mut edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let function = function.into();
        let n = blocks.len();
        for (i, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::validation(
                    format!("edges[{i}]"),
                    format!("{function}: edge ({a}, {b}) out of range for {n} blocks"),
                ));
            }
        }
        for (i, block) in blocks.iter().enumerate() {
            for (j, v) in block.to_array().iter().enumerate() {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::validation(
                        format!("blocks[{i}][{j}]"),
                        format!(
                            "{function}: attribute {} must be finite and non-negative, got {v}",
                            ATTRIBUTE_NAMES[j]
                        ),
                    ));
                }
            }
            // A block on a cycle reaches itself, so the bound is n, not n - 1.
            if block.offspring > n as f64 {
                return Err(Error::validation(
                    format!("blocks[{i}][6]"),
                    format!("{function}: offspring {} exceeds block count {n}", block.offspring),
                ));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self {
            function,
            blocks,
            edges,
        })
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Undirected neighbourhood of every block. A self-loop makes a block its
    /// own neighbour once.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.blocks.len()];
        for &(a, b) in &self.edges {
            adj[a].insert(b);
            adj[b].insert(a);
        }
        adj.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Overwrites every block's offspring attribute from the edge list.
    pub fn refresh_offspring(&mut self) {
        let counts = compute_offspring(&self.edges, self.blocks.len());
        for (block, count) in self.blocks.iter_mut().zip(counts) {
            block.offspring = count as f64;
        }
    }
}

/// Directed function-call graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Fcg {
    pub nodes: BTreeSet<FunctionId>,
    pub edges: BTreeSet<(FunctionId, FunctionId)>,
}

impl Fcg {
    /// Builds an FCG; every edge endpoint must be a declared node.
    pub fn new(
        nodes: impl IntoIterator<Item = FunctionId>,
        edges: impl IntoIterator<Item = (FunctionId, FunctionId)>,
    ) -> Result<Self> {
        let nodes: BTreeSet<FunctionId> = nodes.into_iter().collect();
        let mut out = BTreeSet::new();
        for (caller, callee) in edges {
            for end in [&caller, &callee] {
                if !nodes.contains(end) {
                    return Err(Error::Integrity(format!(
                        "call edge {caller} -> {callee} references undeclared function `{end}`"
                    )));
                }
            }
            out.insert((caller, callee));
        }
        Ok(Self { nodes, edges: out })
    }
}

/// Library and version a database unit belongs to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub library: String,
    pub version: String,
}

/// All features of one binary: the unit of comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryFeatureSet {
    pub binary_id: String,
    /// Sorted by value, no duplicates.
    pub strings: Vec<StringLiteral>,
    pub exports: BTreeSet<String>,
    pub acfgs: BTreeMap<FunctionId, Acfg>,
    pub fcg: Fcg,
    pub provenance: Option<Provenance>,
}

impl BinaryFeatureSet {
    pub fn new(
        binary_id: impl Into<String>,
        strings: Vec<StringLiteral>,
        exports: BTreeSet<String>,
        acfgs: BTreeMap<FunctionId, Acfg>,
        fcg: Fcg,
        provenance: Option<Provenance>,
    ) -> Result<Self> {
        for id in acfgs.keys() {
            if !fcg.nodes.contains(id) {
                return Err(Error::Integrity(format!(
                    "function `{id}` has an ACFG but is not an FCG node"
                )));
            }
        }
        for (id, acfg) in &acfgs {
            if &acfg.function != id {
                return Err(Error::Integrity(format!(
                    "ACFG keyed as `{id}` describes function `{}`",
                    acfg.function
                )));
            }
        }
        let mut strings = strings;
        strings.sort_by(|a, b| a.value.cmp(&b.value));
        strings.dedup_by(|a, b| a.value == b.value);
        Ok(Self {
            binary_id: binary_id.into(),
            strings,
            exports,
            acfgs,
            fcg,
            provenance,
        })
    }

    /// A feature set carrying only basic features, as produced from an ELF
    /// file.
    pub fn basic(binary_id: impl Into<String>, strings: Vec<StringLiteral>, exports: BTreeSet<String>) -> Self {
        Self::new(binary_id, strings, exports, BTreeMap::new(), Fcg::default(), None)
            .expect("an empty graph is always consistent")
    }
}

/// Counts, for every block, the distinct blocks reachable through directed
/// edges. A block only counts itself when it lies on a cycle.
pub fn compute_offspring(edges: &[(usize, usize)], block_count: usize) -> Vec<usize> {
    let mut succ = vec![Vec::new(); block_count];
    for &(a, b) in edges {
        if a < block_count && b < block_count {
            succ[a].push(b);
        }
    }
    let mut seen = vec![usize::MAX; block_count];
    let mut queue = VecDeque::new();
    (0..block_count)
        .map(|start| {
            let mut count = 0;
            queue.clear();
            queue.extend(succ[start].iter().copied());
            while let Some(v) = queue.pop_front() {
                if seen[v] == start {
                    continue;
                }
                seen[v] = start;
                count += 1;
                queue.extend(succ[v].iter().copied());
            }
            count
        })
        .collect()
}

/// ACFGs eligible for embedding, ordered by function id.
pub fn embeddable_functions(fs: &BinaryFeatureSet) -> Vec<&Acfg> {
    fs.acfgs
        .values()
        .filter(|a| a.block_count() >= MIN_EMBED_BLOCKS)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(n: usize) -> Vec<BasicBlockAttrs> {
        vec![BasicBlockAttrs::default(); n]
    }

    fn fs_with_block_counts(counts: &[usize]) -> BinaryFeatureSet {
        let mut acfgs = BTreeMap::new();
        for (i, &n) in counts.iter().enumerate() {
            let id = format!("f{i}");
            acfgs.insert(id.clone(), Acfg::new(id, blocks(n), vec![]).unwrap());
        }
        let fcg = Fcg::new(acfgs.keys().cloned(), []).unwrap();
        BinaryFeatureSet::new("b", vec![], BTreeSet::new(), acfgs, fcg, None).unwrap()
    }

    #[test]
    fn offspring_single_block() {
        assert_eq!(compute_offspring(&[], 1), vec![0]);
    }

    #[test]
    fn offspring_chain() {
        assert_eq!(compute_offspring(&[(0, 1), (1, 2)], 3), vec![2, 1, 0]);
    }

    #[test]
    fn offspring_two_cycle_counts_self() {
        assert_eq!(compute_offspring(&[(0, 1), (1, 0)], 2), vec![2, 2]);
    }

    #[test]
    fn offspring_self_loop() {
        assert_eq!(compute_offspring(&[(0, 0), (0, 1)], 2), vec![2, 0]);
    }

    #[test]
    fn embeddable_threshold() {
        assert!(embeddable_functions(&fs_with_block_counts(&[4, 4, 4])).is_empty());
        let fs = fs_with_block_counts(&[5, 4, 7]);
        let ids: Vec<_> = embeddable_functions(&fs).iter().map(|a| a.function.as_str()).collect();
        assert_eq!(ids, ["f0", "f2"]);
        assert!(embeddable_functions(&fs_with_block_counts(&[])).is_empty());
    }

    #[test]
    fn acfg_rejects_out_of_range_edge() {
        let err = Acfg::new("f", blocks(2), vec![(0, 2)]).unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn acfg_dedups_edges() {
        let a = Acfg::new("f", blocks(2), vec![(0, 1), (0, 1), (1, 0)]).unwrap();
        assert_eq!(a.edges, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn fcg_rejects_dangling_edge() {
        let err = Fcg::new(["a".to_string()], [("a".to_string(), "b".to_string())]).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn feature_set_requires_acfg_nodes_in_fcg() {
        let mut acfgs = BTreeMap::new();
        acfgs.insert("f".to_string(), Acfg::new("f", blocks(1), vec![]).unwrap());
        let err = BinaryFeatureSet::new("b", vec![], BTreeSet::new(), acfgs, Fcg::default(), None).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }
}

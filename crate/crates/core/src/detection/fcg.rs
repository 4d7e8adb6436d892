use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::FunctionPair;
use crate::extraction::{Fcg, FunctionId};

/// An FCG contracted onto its anchor nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiniFcg {
    pub anchors: BTreeSet<FunctionId>,
    pub edges: BTreeSet<(FunctionId, FunctionId)>,
}

/// Contracts `fcg` onto `anchors`: `(a, b)` is an edge iff `a != b` and `b`
/// is reachable from `a` through non-anchor nodes only. Anchors absent from
/// the graph are dropped.
pub fn build_mini_fcg(fcg: &Fcg, anchors: &BTreeSet<FunctionId>) -> MiniFcg {
    let anchors: BTreeSet<FunctionId> = anchors.intersection(&fcg.nodes).cloned().collect();
    let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
    for (a, b) in &fcg.edges {
        succ.entry(a.as_str()).or_default().push(b.as_str());
    }

    let mut edges = BTreeSet::new();
    let mut seen: HashSet<&str> = HashSet::new();
    let mut stack: Vec<&str> = Vec::new();
    for a in &anchors {
        seen.clear();
        stack.clear();
        stack.extend(succ.get(a.as_str()).into_iter().flatten());
        while let Some(v) = stack.pop() {
            if !seen.insert(v) {
                continue;
            }
            if anchors.contains(v) {
                if v != a {
                    edges.insert((a.clone(), v.to_string()));
                }
                continue;
            }
            stack.extend(succ.get(v).into_iter().flatten());
        }
    }
    MiniFcg { anchors, edges }
}

/// Number of target mini-FCG edges `(f1, f2)` for which some pairs
/// `(f1, g1)` and `(f2, g2)` exist with `(g1, g2)` a unit mini-FCG edge.
pub fn common_edges(target: &MiniFcg, unit: &MiniFcg, pairs: &[FunctionPair]) -> usize {
    let mut partners: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for p in pairs {
        partners.entry(&p.target).or_default().insert(&p.unit);
    }
    let unit_edges: HashSet<(&str, &str)> = unit.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    target
        .edges
        .iter()
        .filter(|(f1, f2)| {
            let (Some(g1s), Some(g2s)) = (partners.get(f1.as_str()), partners.get(f2.as_str())) else {
                return false;
            };
            g1s.iter()
                .any(|g1| g2s.iter().any(|g2| unit_edges.contains(&(*g1, *g2))))
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fcg(nodes: &[&str], edges: &[(&str, &str)]) -> Fcg {
        Fcg::new(
            nodes.iter().map(|s| s.to_string()),
            edges.iter().map(|(a, b)| (a.to_string(), b.to_string())),
        )
        .unwrap()
    }

    fn set(items: &[&str]) -> BTreeSet<FunctionId> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn pair(t: &str, u: &str) -> FunctionPair {
        FunctionPair {
            target: t.into(),
            unit: u.into(),
            cosine: 0.9,
        }
    }

    #[test]
    fn all_anchors_keeps_edges() {
        let g = fcg(&["a", "b", "c"], &[("a", "b"), ("b", "c"), ("c", "a")]);
        let m = build_mini_fcg(&g, &set(&["a", "b", "c"]));
        assert_eq!(m.edges, g.edges);
    }

    #[test]
    fn skips_unmatched_interior() {
        let g = fcg(&["1", "w", "2"], &[("1", "w"), ("w", "2")]);
        let m = build_mini_fcg(&g, &set(&["1", "2"]));
        assert_eq!(m.edges, BTreeSet::from([("1".to_string(), "2".to_string())]));
    }

    #[test]
    fn no_anchors_no_edges() {
        let g = fcg(&["a", "b"], &[("a", "b")]);
        assert!(build_mini_fcg(&g, &BTreeSet::new()).edges.is_empty());
    }

    #[test]
    fn anchor_blocks_reachability_and_self_loops_vanish() {
        let g = fcg(
            &["a", "b", "c", "w"],
            &[("a", "b"), ("b", "c"), ("a", "w"), ("w", "a"), ("c", "c")],
        );
        let m = build_mini_fcg(&g, &set(&["a", "b", "c"]));
        assert_eq!(
            m.edges,
            BTreeSet::from([("a".to_string(), "b".to_string()), ("b".to_string(), "c".to_string())])
        );
    }

    #[test]
    fn unmatched_caller_relation_contributes_nothing() {
        // Target: 1 -> 2, 2 -> 5. Unit: 1' -> 2', 5' isolated from 2'.
        let t = fcg(&["1", "2", "5"], &[("1", "2"), ("2", "5")]);
        let u = fcg(&["1'", "2'", "5'", "x"], &[("1'", "2'"), ("x", "5'")]);
        let pairs = [pair("1", "1'"), pair("2", "2'"), pair("5", "5'")];
        let mt = build_mini_fcg(&t, &set(&["1", "2", "5"]));
        let mu = build_mini_fcg(&u, &set(&["1'", "2'", "5'"]));
        assert_eq!(common_edges(&mt, &mu, &pairs), 1);
    }

    #[test]
    fn identity_counts_every_edge() {
        let g = fcg(&["a", "b", "c"], &[("a", "b"), ("b", "c"), ("a", "c")]);
        let m = build_mini_fcg(&g, &set(&["a", "b", "c"]));
        let pairs: Vec<_> = ["a", "b", "c"].iter().map(|f| pair(f, f)).collect();
        assert_eq!(common_edges(&m, &m, &pairs), 3);
        assert_eq!(common_edges(&m, &m, &[]), 0);
    }
}

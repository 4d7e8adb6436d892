use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::FunctionId;

/// Row tag of a stored vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorId {
    pub function: FunctionId,
    pub unit: String,
}

/// One top-K result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub row: usize,
    pub function: FunctionId,
    pub unit: String,
    pub score: f64,
}

/// Dense row-major matrix of unit-norm vectors searched exhaustively by
/// inner product.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorStore {
    dim: usize,
    data: Vec<f64>,
    ids: Vec<VectorId>,
}

const NORM_TOLERANCE: f64 = 1e-6;

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
            ids: Vec::new(),
        }
    }

    pub(crate) fn from_parts(dim: usize, data: Vec<f64>, ids: Vec<VectorId>) -> Result<Self> {
        if data.len() != dim * ids.len() {
            return Err(Error::Integrity(format!(
                "vector matrix holds {} values, expected {} x {dim}",
                data.len(),
                ids.len()
            )));
        }
        Ok(Self { dim, data, ids })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn id(&self, row: usize) -> &VectorId {
        &self.ids[row]
    }

    pub(crate) fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn ids(&self) -> &[VectorId] {
        &self.ids
    }

    /// Appends a vector and returns its row. The vector must be unit-norm.
    pub fn push(&mut self, id: VectorId, vector: &[f64]) -> Result<usize> {
        if self.ids.is_empty() && self.dim == 0 {
            self.dim = vector.len();
        }
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "store holds {}-vectors, got {}",
                self.dim,
                vector.len()
            )));
        }
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Domain(format!(
                "vector for `{}` in `{}` has norm {norm}, expected 1",
                id.function, id.unit
            )));
        }
        self.data.extend_from_slice(vector);
        self.ids.push(id);
        Ok(self.ids.len() - 1)
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        self.ids.truncate(len);
        self.data.truncate(len * self.dim);
    }

    /// Descending score; ties by ascending function id, then unit id.
    fn order(&self, a: (f64, usize), b: (f64, usize)) -> Ordering {
        b.0.total_cmp(&a.0).then_with(|| {
            let (ia, ib) = (&self.ids[a.1], &self.ids[b.1]);
            ia.function.cmp(&ib.function).then_with(|| ia.unit.cmp(&ib.unit))
        })
    }

    /// Exact maximum-inner-product search. Returns `min(k, len)` hits in
    /// descending score order.
    pub fn topk(&self, query: &[f64], k: usize) -> Result<Vec<Hit>> {
        if self.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        if query.len() != self.dim {
            return Err(Error::Shape(format!(
                "query has {} components, store holds {}-vectors",
                query.len(),
                self.dim
            )));
        }
        let mut scored: Vec<(f64, usize)> = self
            .data
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(row, v)| (v.iter().zip(query).map(|(a, b)| a * b).sum(), row))
            .collect();
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, |&a, &b| self.order(a, b));
            scored.truncate(k);
        }
        scored.sort_unstable_by(|&a, &b| self.order(a, b));
        Ok(scored
            .into_iter()
            .map(|(score, row)| Hit {
                row,
                function: self.ids[row].function.clone(),
                unit: self.ids[row].unit.clone(),
                score,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(f: &str, u: &str) -> VectorId {
        VectorId {
            function: f.into(),
            unit: u.into(),
        }
    }

    #[test]
    fn self_query_scores_one() {
        let mut s = VectorStore::new(2);
        s.push(id("a", "u"), &[1.0, 0.0]).unwrap();
        s.push(id("b", "u"), &[0.0, 1.0]).unwrap();
        let hits = s.topk(&[0.0, 1.0], 1).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].function, "b");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_beyond_len_returns_all_sorted() {
        let mut s = VectorStore::new(2);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        s.push(id("a", "u"), &[1.0, 0.0]).unwrap();
        s.push(id("b", "u"), &[r, r]).unwrap();
        s.push(id("c", "u"), &[0.0, 1.0]).unwrap();
        let hits = s.topk(&[1.0, 0.0], 10).unwrap();
        let names: Vec<_> = hits.iter().map(|h| h.function.as_str()).collect();
        assert_eq!(names, ["a", "b", "c"]);
    }

    #[test]
    fn ties_by_function_then_unit() {
        let mut s = VectorStore::new(1);
        s.push(id("z", "u1"), &[1.0]).unwrap();
        s.push(id("a", "u2"), &[1.0]).unwrap();
        s.push(id("a", "u1"), &[1.0]).unwrap();
        let hits = s.topk(&[1.0], 2).unwrap();
        assert_eq!((hits[0].function.as_str(), hits[0].unit.as_str()), ("a", "u1"));
        assert_eq!((hits[1].function.as_str(), hits[1].unit.as_str()), ("a", "u2"));
    }

    #[test]
    fn empty_store_returns_nothing() {
        assert!(VectorStore::new(3).topk(&[1.0, 0.0, 0.0], 5).unwrap().is_empty());
    }

    #[test]
    fn rejects_non_unit_vectors() {
        let mut s = VectorStore::new(2);
        assert!(matches!(s.push(id("a", "u"), &[1.0, 1.0]), Err(Error::Domain(_))));
    }
}

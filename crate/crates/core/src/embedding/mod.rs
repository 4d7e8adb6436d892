//! Function embedding with a Structure2vec graph network.
//!
//! Every block `v` carries an attribute vector `x_v` and a state `mu_v`,
//! initialised to zero. Each of `T` rounds updates
//!
//! ```text
//! mu_v <- tanh(W1 x_v + P1 relu(P2 sum_{u in N(v)} mu_u))
//! ```
//!
//! with `N(v)` the undirected block neighbourhood. The graph vector is
//! `W2 sum_v mu_v`, L2-normalised at emission so inner products between
//! emitted vectors are cosines.

mod loss;
mod train;

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::extraction::{embeddable_functions, Acfg, BinaryFeatureSet, FunctionId, ATTRIBUTE_COUNT};

pub use loss::{contrastive_loss, loss_and_gradient, loss_gradient, pair_loss, PairLabel, TrainingPair};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome};

/// Trainable parameters. Gradients use the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `p x d` input projection.
    pub w1: Array2<f64>,
    /// Outer `p x p` layer of the neighbour transform.
    pub p1: Array2<f64>,
    /// Inner `p x p` layer of the neighbour transform.
    pub p2: Array2<f64>,
    /// `p x p` output aggregation.
    pub w2: Array2<f64>,
}

const W1_INIT_BOUND: f64 = 0.02;

impl ModelParams {
    pub fn zeros(embed_dim: usize, input_dim: usize) -> Self {
        Self {
            w1: Array2::zeros((embed_dim, input_dim)),
            p1: Array2::zeros((embed_dim, embed_dim)),
            p2: Array2::zeros((embed_dim, embed_dim)),
            w2: Array2::zeros((embed_dim, embed_dim)),
        }
    }

    /// Uniform in `[-1/sqrt(p), 1/sqrt(p)]`, except `w1`, which is drawn
    /// in `[-W1_INIT_BOUND, W1_INIT_BOUND]` because raw attribute counts
    /// reach the tens.
    pub fn random(embed_dim: usize, input_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (embed_dim as f64).sqrt();
        let mut draw = |rows, cols, b: f64| Array2::from_shape_fn((rows, cols), |_| rng.random_range(-b..=b));
        Self {
            w1: draw(embed_dim, input_dim, W1_INIT_BOUND),
            p1: draw(embed_dim, embed_dim, bound),
            p2: draw(embed_dim, embed_dim, bound),
            w2: draw(embed_dim, embed_dim, bound),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.embed_dim(), self.input_dim())
    }

    pub fn embed_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn matrices(&self) -> [&Array2<f64>; 4] {
        [&self.w1, &self.p1, &self.p2, &self.w2]
    }

    pub fn matrices_mut(&mut self) -> [&mut Array2<f64>; 4] {
        [&mut self.w1, &mut self.p1, &mut self.p2, &mut self.w2]
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.matrices().iter().map(|m| m.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view: coordinates enumerate `w1`, `p1`, `p2`, `w2` in row-major
    /// order.
    pub fn get(&self, index: usize) -> f64 {
        let (m, i) = self.locate(index);
        *self.matrices()[m].iter().nth(i).expect("index in range")
    }

    pub fn set(&mut self, index: usize, value: f64) {
        let (m, i) = self.locate(index);
        *self.matrices_mut()[m].iter_mut().nth(i).expect("index in range") = value;
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (m, mat) in self.matrices().iter().enumerate() {
            if index < mat.len() {
                return (m, index);
            }
            index -= mat.len();
        }
        panic!("parameter index out of range");
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.matrices_mut().into_iter().zip(other.matrices()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for m in self.matrices_mut() {
            m.mapv_inplace(|v| v * factor);
        }
    }

    pub fn norm(&self) -> f64 {
        self.matrices()
            .iter()
            .map(|m| m.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.matrices().iter().all(|m| m.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub embed_dim: usize,
    pub iterations: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            iterations: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub params: ModelParams,
    /// Message-passing rounds `T`.
    pub iterations: usize,
    pub seed: u64,
}

/// An emitted, L2-normalised function embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionVector {
    pub function: FunctionId,
    pub unit: String,
    pub vector: Vec<f64>,
}

const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format_version: u32,
    input_dim: usize,
    embed_dim: usize,
    iterations: usize,
    seed: u64,
    w1: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    w2: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for back-propagation.
pub(crate) struct Trace {
    x: Array2<f64>,
    neighbors: Vec<Vec<usize>>,
    rounds: Vec<Round>,
    pooled: Array1<f64>,
    pub(crate) out: Array1<f64>,
}

struct Round {
    /// Neighbour sums fed to the transform.
    agg: Array2<f64>,
    /// `agg P2^T`, before the rectifier.
    pre: Array2<f64>,
    /// States after this round.
    mu: Array2<f64>,
}

/// `out[v] = sum_{u in N(v)} m[u]`.
fn aggregate(neighbors: &[Vec<usize>], m: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(m.raw_dim());
    for (v, ns) in neighbors.iter().enumerate() {
        let mut row = out.row_mut(v);
        for &u in ns {
            row += &m.row(u);
        }
    }
    out
}

impl EmbeddingModel {
    pub fn new(config: EmbeddingConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            params: ModelParams::random(config.embed_dim, ATTRIBUTE_COUNT, &mut rng),
            iterations: config.iterations,
            seed,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.params.embed_dim()
    }

    pub(crate) fn forward(&self, acfg: &Acfg) -> Result<Trace> {
        let ParamsRef { w1, p1, p2, w2 } = ParamsRef::of(&self.params);
        if w1.ncols() != ATTRIBUTE_COUNT {
            return Err(Error::Shape(format!(
                "model expects {} block attributes, ACFGs carry {ATTRIBUTE_COUNT}",
                w1.ncols()
            )));
        }
        if acfg.block_count() == 0 {
            return Err(Error::Shape(format!("function `{}` has no blocks", acfg.function)));
        }
        let n = acfg.block_count();
        let p = w1.nrows();
        let x = Array2::from_shape_fn((n, ATTRIBUTE_COUNT), |(i, j)| acfg.blocks[i].to_array()[j]);
        let neighbors = acfg.undirected_neighbors();
        let projected = x.dot(&w1.t());

        let mut mu = Array2::<f64>::zeros((n, p));
        let mut rounds = Vec::with_capacity(self.iterations);
        for _ in 0..self.iterations {
            let agg = aggregate(&neighbors, &mu);
            let pre = agg.dot(&p2.t());
            let rect = pre.mapv(|v| v.max(0.0));
            let next = (&projected + &rect.dot(&p1.t())).mapv(f64::tanh);
            rounds.push(Round {
                agg,
                pre,
                mu: next.clone(),
            });
            mu = next;
        }
        let pooled = mu.sum_axis(Axis(0));
        let out = w2.dot(&pooled);
        Ok(Trace {
            x,
            neighbors,
            rounds,
            pooled,
            out,
        })
    }

    /// Accumulates into `grad` the parameter gradient of a scalar whose
    /// gradient with respect to the raw graph vector is `d_out`.
    pub(crate) fn backward(&self, trace: &Trace, d_out: &Array1<f64>, grad: &mut ModelParams) {
        let ParamsRef { w1: _, p1, p2, w2 } = ParamsRef::of(&self.params);
        let n = trace.x.nrows();

        grad.w2 += &outer(d_out, &trace.pooled);
        let d_pooled = w2.t().dot(d_out);
        let mut d_mu = Array2::from_shape_fn((n, d_pooled.len()), |(_, j)| d_pooled[j]);

        for round in trace.rounds.iter().rev() {
            let d_z = &d_mu * &round.mu.mapv(|m| 1.0 - m * m);
            grad.w1 += &d_z.t().dot(&trace.x);
            let rect = round.pre.mapv(|v| v.max(0.0));
            grad.p1 += &d_z.t().dot(&rect);
            let d_rect = d_z.dot(p1);
            let d_pre = ndarray::Zip::from(&d_rect)
                .and(&round.pre)
                .map_collect(|&g, &h| if h > 0.0 { g } else { 0.0 });
            grad.p2 += &d_pre.t().dot(&round.agg);
            let d_agg = d_pre.dot(p2);
            // The neighbourhood relation is symmetric, so the transpose of
            // the aggregation is the aggregation itself.
            d_mu = aggregate(&trace.neighbors, &d_agg);
        }
    }

    /// Embeds one ACFG and normalises the result.
    pub fn embed(&self, acfg: &Acfg) -> Result<Vec<f64>> {
        let trace = self.forward(acfg)?;
        normalized(&trace.out).ok_or_else(|| Error::DegenerateEmbedding(acfg.function.clone()))
    }

    pub fn embed_acfg(&self, acfg: &Acfg, unit: &str) -> Result<FunctionVector> {
        Ok(FunctionVector {
            function: acfg.function.clone(),
            unit: unit.to_string(),
            vector: self.embed(acfg)?,
        })
    }

    /// Embeds every function with at least five blocks, in function-id order.
    pub fn embed_feature_set(&self, fs: &BinaryFeatureSet) -> Result<Vec<FunctionVector>> {
        embeddable_functions(fs)
            .par_iter()
            .map(|a| self.embed_acfg(a, &fs.binary_id))
            .collect()
    }

    fn to_checkpoint(&self) -> Checkpoint {
        let flat = |m: &Array2<f64>| m.iter().copied().collect();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT,
            input_dim: self.params.input_dim(),
            embed_dim: self.params.embed_dim(),
            iterations: self.iterations,
            seed: self.seed,
            w1: flat(&self.params.w1),
            p1: flat(&self.params.p1),
            p2: flat(&self.params.p2),
            w2: flat(&self.params.w2),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_checkpoint()).expect("checkpoint serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.format_version != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "unsupported checkpoint format {} (expected {CHECKPOINT_FORMAT})",
                c.format_version
            )));
        }
        let shape = |name: &str, data: Vec<f64>, rows: usize, cols: usize| {
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|_| Error::Shape(format!("checkpoint matrix {name} is not {rows}x{cols}")))
        };
        let params = ModelParams {
            w1: shape("w1", c.w1, c.embed_dim, c.input_dim)?,
            p1: shape("p1", c.p1, c.embed_dim, c.embed_dim)?,
            p2: shape("p2", c.p2, c.embed_dim, c.embed_dim)?,
            w2: shape("w2", c.w2, c.embed_dim, c.embed_dim)?,
        };
        if !params.is_finite() {
            return Err(Error::Integrity("checkpoint contains non-finite parameters".into()));
        }
        Ok(Self {
            params,
            iterations: c.iterations,
            seed: c.seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized checkpoint; ties a database to the model
    /// that produced its vectors.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

struct ParamsRef<'a> {
    w1: &'a Array2<f64>,
    p1: &'a Array2<f64>,
    p2: &'a Array2<f64>,
    w2: &'a Array2<f64>,
}

impl<'a> ParamsRef<'a> {
    fn of(p: &'a ModelParams) -> Self {
        Self {
            w1: &p.w1,
            p1: &p.p1,
            p2: &p.p2,
            w2: &p.w2,
        }
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

fn normalized(v: &Array1<f64>) -> Option<Vec<f64>> {
    let norm = v.dot(v).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|x| x / norm).collect())
}

/// Cosine similarity of two nonzero vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine of {}- and {}-vectors", a.len(), b.len())));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Inner product; equals the cosine on emitted (unit-norm) vectors.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::BasicBlockAttrs;

    fn attrs(v: [f64; 7]) -> BasicBlockAttrs {
        BasicBlockAttrs::from_array(v)
    }

    fn sample_acfg() -> Acfg {
        let mut a = Acfg::new(
            "f",
            vec![
                attrs([0., 1., 1., 0., 5., 2., 0.]),
                attrs([1., 0., 1., 1., 3., 0., 0.]),
                attrs([0., 2., 0., 0., 7., 3., 0.]),
                attrs([0., 0., 1., 2., 2., 1., 0.]),
                attrs([2., 1., 0., 0., 4., 0., 0.]),
            ],
            vec![(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (3, 1)],
        )
        .unwrap();
        a.refresh_offspring();
        a
    }

    #[test]
    fn cosine_basics() {
        let v = [0.3, -1.2, 2.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!(cosine(&[1.0, 0.0], &[0.0, 2.0]).unwrap().abs() < 1e-12);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_iterations_is_degenerate() {
        let model = EmbeddingModel::new(
            EmbeddingConfig {
                embed_dim: 8,
                iterations: 0,
            },
            1,
        );
        assert!(matches!(
            model.embed(&sample_acfg()),
            Err(Error::DegenerateEmbedding(_))
        ));
    }

    #[test]
    fn output_is_unit_norm() {
        let model = EmbeddingModel::new(EmbeddingConfig::default(), 3);
        let v = model.embed(&sample_acfg()).unwrap();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn relabeling_invariance() {
        let model = EmbeddingModel::new(EmbeddingConfig::default(), 5);
        let a = sample_acfg();
        // Reverse block order.
        let n = a.block_count();
        let perm = |i: usize| n - 1 - i;
        let mut blocks = vec![BasicBlockAttrs::default(); n];
        for (i, b) in a.blocks.iter().enumerate() {
            blocks[perm(i)] = *b;
        }
        let edges = a.edges.iter().map(|&(x, y)| (perm(x), perm(y))).collect();
        let b = Acfg::new("g", blocks, edges).unwrap();
        let va = model.embed(&a).unwrap();
        let vb = model.embed(&b).unwrap();
        for (x, y) in va.iter().zip(&vb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let model = EmbeddingModel::new(EmbeddingConfig::default(), 11);
        let back = EmbeddingModel::from_json(&model.to_json()).unwrap();
        assert_eq!(model, back);
        assert_eq!(model.fingerprint(), back.fingerprint());
    }

    #[test]
    fn checkpoint_shape_mismatch() {
        let model = EmbeddingModel::new(
            EmbeddingConfig {
                embed_dim: 4,
                iterations: 2,
            },
            0,
        );
        let text = model.to_json().replace("\"embed_dim\":4", "\"embed_dim\":5");
        assert!(matches!(EmbeddingModel::from_json(&text), Err(Error::Shape(_))));
    }

    #[test]
    fn shape_error_on_wrong_input_dim() {
        let mut model = EmbeddingModel::new(
            EmbeddingConfig {
                embed_dim: 4,
                iterations: 2,
            },
            0,
        );
        model.params.w1 = Array2::zeros((4, 6));
        assert!(matches!(model.embed(&sample_acfg()), Err(Error::Shape(_))));
    }

    #[test]
    fn params_flat_indexing() {
        let mut p = ModelParams::zeros(2, 3);
        assert_eq!(p.len(), 6 + 4 + 4 + 4);
        p.set(7, 2.5);
        assert_eq!(p.p1[[0, 1]], 2.5);
        assert_eq!(p.get(7), 2.5);
    }
}

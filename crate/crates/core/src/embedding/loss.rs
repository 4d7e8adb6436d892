use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EmbeddingModel, ModelParams};
use crate::error::{Error, Result};
use crate::extraction::Acfg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    /// Both sides compile from the same source function.
    Similar,
    Dissimilar,
}

impl PairLabel {
    /// `+1` for similar pairs, `-1` otherwise.
    pub fn y(self) -> f64 {
        match self {
            PairLabel::Similar => 1.0,
            PairLabel::Dissimilar => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub a: Acfg,
    pub b: Acfg,
    pub label: PairLabel,
}

/// Contribution of one pair with cosine `s`:
/// `½(1+Y)(1−S)² + ½(1−Y)(1+S)²`.
pub fn pair_loss(s: f64, label: PairLabel) -> f64 {
    let y = label.y();
    0.5 * (1.0 + y) * (1.0 - s).powi(2) + 0.5 * (1.0 - y) * (1.0 + s).powi(2)
}

fn d_pair_loss(s: f64, label: PairLabel) -> f64 {
    let y = label.y();
    -(1.0 + y) * (1.0 - s) + (1.0 - y) * (1.0 + s)
}

fn raw_cosine(a: &Array1<f64>, b: &Array1<f64>) -> Option<(f64, f64, f64)> {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return None;
    }
    Some((a.dot(b) / (na * nb), na, nb))
}

fn pair_cosine(model: &EmbeddingModel, pair: &TrainingPair) -> Result<f64> {
    let ta = model.forward(&pair.a)?;
    let tb = model.forward(&pair.b)?;
    match raw_cosine(&ta.out, &tb.out) {
        Some((s, _, _)) => Ok(s),
        None if ta.out.dot(&ta.out) == 0.0 => Err(Error::DegenerateEmbedding(pair.a.function.clone())),
        None => Err(Error::DegenerateEmbedding(pair.b.function.clone())),
    }
}

fn pair_loss_and_gradient(model: &EmbeddingModel, pair: &TrainingPair, grad: &mut ModelParams) -> Result<f64> {
    let ta = model.forward(&pair.a)?;
    let tb = model.forward(&pair.b)?;
    let (s, na, nb) = match raw_cosine(&ta.out, &tb.out) {
        Some(v) => v,
        None if ta.out.dot(&ta.out) == 0.0 => return Err(Error::DegenerateEmbedding(pair.a.function.clone())),
        None => return Err(Error::DegenerateEmbedding(pair.b.function.clone())),
    };
    let dl_ds = d_pair_loss(s, pair.label);
    // dS/da = b/(|a||b|) - S a/|a|^2, symmetrically for b.
    let d_a = (&tb.out / (na * nb) - &ta.out * (s / (na * na))) * dl_ds;
    let d_b = (&ta.out / (na * nb) - &tb.out * (s / (nb * nb))) * dl_ds;
    model.backward(&ta, &d_a, grad);
    model.backward(&tb, &d_b, grad);
    Ok(pair_loss(s, pair.label))
}

/// Summed contrastive loss over `pairs`.
pub fn contrastive_loss(pairs: &[TrainingPair], model: &EmbeddingModel) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Config("contrastive loss needs at least one pair".into()));
    }
    let losses = pairs
        .par_iter()
        .map(|p| pair_cosine(model, p).map(|s| pair_loss(s, p.label)))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum())
}

// Fixed chunking keeps the summation order, and therefore the result bits,
// independent of the thread count.
const GRAD_CHUNK: usize = 16;

/// Summed loss and its exact gradient with respect to every parameter.
pub fn loss_and_gradient(pairs: &[TrainingPair], model: &EmbeddingModel) -> Result<(f64, ModelParams)> {
    if pairs.is_empty() {
        return Err(Error::Config("contrastive loss needs at least one pair".into()));
    }
    let partials = pairs
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grad = model.params.zeros_like();
            let mut pair_grad = model.params.zeros_like();
            let mut loss = 0.0;
            for p in chunk {
                pair_grad.matrices_mut().into_iter().for_each(|m| m.fill(0.0));
                loss += pair_loss_and_gradient(model, p, &mut pair_grad)?;
                grad.add_assign(&pair_grad);
            }
            Ok((loss, grad))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = model.params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        total.add_assign(g);
    }
    Ok((loss, total))
}

pub fn loss_gradient(pairs: &[TrainingPair], model: &EmbeddingModel) -> Result<ModelParams> {
    loss_and_gradient(pairs, model).map(|(_, g)| g)
}

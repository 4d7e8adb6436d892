use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{contrastive_loss, loss_and_gradient, PairLabel, TrainingPair};
use super::{EmbeddingConfig, EmbeddingModel, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub embedding: EmbeddingConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Share of pairs held out to pick the best epoch.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embedding: EmbeddingConfig::default(),
            epochs: 20,
            batch_size: 32,
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-pair loss over the training split.
    pub train_loss: f64,
    /// Mean per-pair loss over the validation split (training split when
    /// nothing is held out).
    pub validation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

struct Adam {
    m: ModelParams,
    v: ModelParams,
    step: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    fn apply(&mut self, params: &mut ModelParams, grad: &ModelParams, cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        let mats = params.matrices_mut();
        let ms = self.m.matrices_mut();
        let vs = self.v.matrices_mut();
        for (((p, m), v), g) in mats.into_iter().zip(ms).zip(vs).zip(grad.matrices()) {
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            });
        }
    }
}

/// Trains a fresh model on `pairs` and returns the parameters with the best
/// validation loss. Runs are bit-reproducible for a given seed.
pub fn train(pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let has = |l| pairs.iter().any(|p| p.label == l);
    if !has(PairLabel::Similar) || !has(PairLabel::Dissimilar) {
        return Err(Error::Config(
            "training data must contain both similar and dissimilar pairs".into(),
        ));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config("batch size and epoch count must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let held_out = ((pairs.len() as f64) * cfg.validation_fraction).round() as usize;
    let held_out = held_out.min(pairs.len().saturating_sub(1));
    let validation: Vec<TrainingPair> = order[..held_out].iter().map(|&i| pairs[i].clone()).collect();
    let training: Vec<TrainingPair> = order[held_out..].iter().map(|&i| pairs[i].clone()).collect();

    let mut model = EmbeddingModel::new(cfg.embedding, cfg.seed);
    let mut adam = Adam::new(&model.params);
    let mut best = (f64::INFINITY, model.params.clone(), 0);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch_order: Vec<usize> = (0..training.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        batch_order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in batch_order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| training[i].clone()));
            let (loss, mut grad) = loss_and_gradient(&batch, &model)?;
            grad.scale(1.0 / batch.len() as f64);
            adam.apply(&mut model.params, &grad, cfg);
            train_loss += loss;
        }
        train_loss /= training.len() as f64;
        let validation_loss = if validation.is_empty() {
            contrastive_loss(&training, &model)? / training.len() as f64
        } else {
            contrastive_loss(&validation, &model)? / validation.len() as f64
        };
        info!("epoch {epoch}: train loss {train_loss:.5}, validation loss {validation_loss:.5}");
        if validation_loss < best.0 {
            best = (validation_loss, model.params.clone(), epoch);
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            validation_loss,
        });
    }

    model.params = best.1;
    Ok(TrainOutcome {
        model,
        best_epoch: best.2,
        history,
    })
}

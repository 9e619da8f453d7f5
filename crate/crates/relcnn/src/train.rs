//! Minibatch SGD training with per-epoch shuffling, dev-based early stopping
//! and best-snapshot restoration. Deterministic for a fixed seed.

use rand::seq::SliceRandom;

use crate::dataset::{clean_negatives, subsample_negatives, CleanMode, RawExample, TriggerList};
use crate::encode::EncodedExample;
use crate::error::{Error, Result};
use crate::eval::{evaluate, Thresholds};
use crate::model::{Model, Variant};
use crate::optim::sgd_step;
use crate::rng::sub_rng;
use crate::tape::Grads;

/// Training hyperparameters. Defaults follow the published setup: filter
/// width 3, 300 filters, 100 relation / 100 entity hidden units, SGD with
/// minibatches of 10, learning rate 0.1 and an L2 penalty of 1e-5.
#[derive(Debug, Clone)]
pub struct Hyperparams {
    pub filter_width: usize,
    pub num_filters: usize,
    pub hidden_rel: usize,
    pub hidden_ent: usize,
    pub alpha: f64,
    pub lr: f64,
    pub batch: usize,
    pub l2: f64,
    pub embedding_dim: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            filter_width: 3,
            num_filters: 300,
            hidden_rel: 100,
            hidden_ent: 100,
            alpha: 0.5,
            lr: 0.1,
            batch: 10,
            l2: 1e-5,
            embedding_dim: 50,
            epochs: 100,
            patience: 10,
            seed: 42,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.filter_width == 0
            || self.num_filters == 0
            || self.hidden_rel == 0
            || self.hidden_ent == 0
            || self.batch == 0
            || self.embedding_dim == 0
            || self.epochs == 0
        {
            return Err(Error::InvalidConfig(
                "hyperparameters must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !self.lr.is_finite() || self.lr < 0.0 || !self.l2.is_finite() || self.l2 < 0.0 {
            return Err(Error::InvalidConfig("lr and l2 must be >= 0".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> crate::model::ModelDims {
        crate::model::ModelDims {
            filter_width: self.filter_width,
            num_filters: self.num_filters,
            emb_dim: self.embedding_dim,
            hidden_rel: self.hidden_rel,
            hidden_ent: self.hidden_ent,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_macro_f1: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose snapshot the model carries; 0 when training never
    /// evaluated.
    pub best_epoch: usize,
    pub best_dev_f1: f64,
}

/// Trigger cleaning plus 1:1 negative subsampling, as used for multi-class
/// training sets. Binary variants clean against their own slot only.
pub fn prepare_training_data(
    raws: &[RawExample],
    triggers: Option<&TriggerList>,
    variant: Variant,
    binary_slot: Option<&str>,
    subsample: bool,
    seed: u64,
) -> Vec<RawExample> {
    let mut data: Vec<RawExample> = match triggers {
        Some(t) if !t.is_empty() => {
            let mode = match (variant, binary_slot) {
                (Variant::Binary, Some(slot)) => CleanMode::Binary { slot: slot.to_string() },
                _ => CleanMode::MultiClass,
            };
            clean_negatives(raws, t, &mode)
        }
        _ => raws.to_vec(),
    };
    if subsample {
        data = subsample_negatives(&data, seed);
    }
    data
}

/// Minibatch SGD with uniform per-epoch shuffling; after each epoch the dev
/// macro F1 (at default thresholds) is computed and the best-scoring
/// parameter snapshot is kept. Stops early after `patience` epochs without
/// improvement. The model ends up carrying the best snapshot.
pub fn train(
    model: &mut Model,
    train_set: &[EncodedExample],
    dev_set: &[EncodedExample],
    hp: &Hyperparams,
) -> Result<TrainHistory> {
    hp.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::InvalidConfig(
            "training and dev sets must be non-empty".into(),
        ));
    }
    let mut rng = sub_rng(hp.seed, "shuffle");
    let thresholds = Thresholds::new();
    let mut history = TrainHistory::default();
    let mut best_params = model.params().clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut stale = 0usize;
    let mut grads = Grads::zeros_like(model.params());

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(hp.batch).enumerate() {
            let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| &train_set[i]).collect();
            grads.zero_all();
            let total = model.batch_loss_and_grads(&batch, hp.alpha, &mut grads)?;
            if !total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += total;
            grads.scale(1.0 / batch.len() as f64);
            sgd_step(model.params_mut(), &grads, hp.lr, hp.l2);
        }
        if !model.params().all_finite() {
            return Err(Error::Diverged { epoch, batch: 0 });
        }
        let report = evaluate(model, dev_set, &thresholds)?;
        let dev_f1 = report.macro_f1;
        history.epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            dev_macro_f1: dev_f1,
        });
        if dev_f1 > best_f1 {
            best_f1 = dev_f1;
            best_epoch = epoch;
            best_params.copy_values_from(model.params());
            stale = 0;
        } else {
            stale += 1;
            if stale >= hp.patience {
                break;
            }
        }
    }
    model.params_mut().copy_values_from(&best_params);
    history.best_epoch = best_epoch;
    history.best_dev_f1 = best_f1.max(0.0);
    Ok(history)
}

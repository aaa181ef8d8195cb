use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cnn::Cnn;
use super::data::Dataset;
use super::metrics::{compute_metrics, Metrics};
use super::optim::AdamW;
use super::Classifier;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_macro_f1: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch (or the last epoch without validation data).
    pub model: Cnn,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Mini-batch AdamW on mean cross-entropy with best-validation checkpointing.
pub fn train(
    mut model: Cnn,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.check(train)?;
    if let Some(v) = val {
        model.check(v)?;
    }
    if train.is_empty() && cfg.epochs > 0 {
        return Err(Error::EmptyCorpus("training split is empty".into()));
    }
    let val = val.filter(|v| !v.is_empty());
    let mut opt = AdamW::new(model.num_params(), cfg.learning_rate, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, usize, Vec<f64>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = model.loss_and_grad(train, batch, Some(&mut rng));
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite loss {loss}"),
                });
            }
            opt.step(model.params_mut(), &grad);
            total += loss * batch.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let mut rec = EpochRecord {
            epoch,
            train_loss,
            val_loss: None,
            val_macro_f1: None,
            val_accuracy: None,
        };
        // Higher macro F1 wins; lower loss breaks ties.
        let (score, tie) = if let Some(v) = val {
            let m = evaluate(&model, v)?;
            if !m.loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "non-finite validation loss".into(),
                });
            }
            rec.val_loss = Some(m.loss);
            rec.val_macro_f1 = Some(m.macro_f1);
            rec.val_accuracy = Some(m.accuracy);
            (m.macro_f1, -m.loss)
        } else {
            (0.0, -train_loss)
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.4}{}",
            rec.val_macro_f1
                .map(|f| format!(", val macro F1 {f:.4}"))
                .unwrap_or_default()
        );
        history.push(rec);
        let improved = best
            .as_ref()
            .map_or(true, |(s, t, _, _)| score > *s || (score == *s && tie > *t));
        if improved {
            best = Some((score, tie, epoch, model.params().to_vec()));
        }
        if let (Some(p), Some((_, _, at, _))) = (cfg.patience, &best) {
            if epoch - at >= p {
                log::info!("early stop after epoch {epoch}");
                break;
            }
        }
    }

    let best_epoch = best.as_ref().map(|b| b.2);
    if let Some((_, _, _, params)) = best {
        model.params_mut().copy_from_slice(&params);
    }
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Metrics of any classifier on a dataset.
pub fn evaluate<C: Classifier + ?Sized>(clf: &C, data: &Dataset) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus("evaluation split is empty".into()));
    }
    let probs = clf.predict_all(data);
    Ok(compute_metrics(&probs, &data.labels, clf.num_classes()))
}

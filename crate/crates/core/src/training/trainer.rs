use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, Stream, TrainingError};
use crate::metrics::{classify, compute_metrics, confusion, ConfusionMatrix, MetricsReport};
use crate::nn::{
    adam_step, bce_loss, image_tensor, AdamConfig, AdamState, Checkpoint, Gradients, Model,
    NnError,
};
use crate::par::map_ordered;
use crate::signal_io::Label;
use crate::spectrogram::SpectrogramImage;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub threshold: f64,
    pub seed: u64,
    /// Per-class loss weights `[normal, abnormal]`; `None` weighs both as 1.
    pub class_weights: Option<[f64; 2]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 110,
            learning_rate: 1e-3,
            batch_size: 32,
            threshold: 0.5,
            seed: 42,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::InvalidSetting(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    fn weight(&self, label: Label) -> f64 {
        self.class_weights.map_or(1.0, |w| w[label.as_u8() as usize])
    }
}

/// Metrics for one epoch. Training figures are running averages over the
/// epoch with dropout active; validation figures use inference mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_loss: Option<f64>,
    pub valid_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// State after the last epoch, optimizer included.
    pub final_checkpoint: Checkpoint,
    /// Parameters from the epoch with the best validation accuracy (earliest
    /// on ties); equals the final model when there is no validation set.
    pub best_checkpoint: Checkpoint,
    pub best_epoch: Option<usize>,
    pub records: Vec<EpochRecord>,
}

fn label_of(img: &SpectrogramImage) -> Result<Label, TrainingError> {
    img.label.ok_or_else(|| TrainingError::MissingLabel(img.id.clone()))
}

/// Inference-mode probabilities for `images[idx]`, in `idx` order.
pub fn predict_indices(
    model: &Model,
    images: &[SpectrogramImage],
    idx: &[usize],
) -> Result<Vec<f64>, NnError> {
    map_ordered(idx, |_, &i| model.predict(&image_tensor(&images[i])))
        .into_iter()
        .collect()
}

/// Confusion matrix and metrics of `model` on `images[idx]`.
pub fn evaluate_indices(
    model: &Model,
    images: &[SpectrogramImage],
    idx: &[usize],
    threshold: f64,
) -> Result<(ConfusionMatrix, MetricsReport), TrainingError> {
    let probs = predict_indices(model, images, idx)?;
    let labels = idx
        .iter()
        .map(|&i| label_of(&images[i]))
        .collect::<Result<Vec<_>, _>>()?;
    let cm = confusion(&probs, &labels, threshold)?;
    Ok((cm, compute_metrics(&cm)))
}

fn diverged(epoch: usize, batch: usize, loss: f64) -> TrainingError {
    log::error!("training diverged: epoch {epoch} batch {batch} loss {loss}");
    TrainingError::DivergedLoss { epoch, batch, loss }
}

/// Mini-batch Adam on `images[train_idx]`, validating on `images[valid_idx]`
/// after every epoch.
///
/// Per-sample gradients are summed in batch order, so the result is bitwise
/// reproducible for a given seed no matter how many threads run.
pub fn train_model(
    model: Model,
    tc: &TrainConfig,
    images: &[SpectrogramImage],
    train_idx: &[usize],
    valid_idx: &[usize],
) -> Result<TrainOutcome, TrainingError> {
    tc.validate()?;
    if tc.epochs > 0 && train_idx.is_empty() {
        return Err(TrainingError::InvalidSetting("empty training set".into()));
    }
    let train_labels = train_idx
        .iter()
        .map(|&i| label_of(&images[i]))
        .collect::<Result<Vec<_>, _>>()?;
    let valid_labels = valid_idx
        .iter()
        .map(|&i| label_of(&images[i]))
        .collect::<Result<Vec<_>, _>>()?;

    let mut model = model;
    let mut opt = AdamState::new(&model, AdamConfig::with_learning_rate(tc.learning_rate));
    let mut best: Option<(f64, usize, Model)> = None;
    let mut records = Vec::with_capacity(tc.epochs);
    let mut order: Vec<usize> = (0..train_idx.len()).collect();

    for epoch in 0..tc.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, Stream::Shuffle, epoch as u64, 0));
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, batch) in order.chunks(tc.batch_size).enumerate() {
            let results = map_ordered(batch, |_, &pos| {
                let img = &images[train_idx[pos]];
                let y = train_labels[pos];
                let mut g = Gradients::zeros_for(&model);
                let mut drng = ChaCha8Rng::seed_from_u64(derive_seed(
                    tc.seed,
                    Stream::Dropout,
                    epoch as u64,
                    pos as u64,
                ));
                let (loss, p) = model.accumulate_gradient(
                    &image_tensor(img),
                    y.target(),
                    tc.weight(y),
                    Some(&mut drng),
                    &mut g,
                )?;
                Ok::<_, NnError>((loss, p, y, g))
            });
            let mut total = Gradients::zeros_for(&model);
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, p, y, g) = r.map_err(|e| match e {
                    NnError::NonFinite(_) => diverged(epoch, b, f64::NAN),
                    other => other.into(),
                })?;
                batch_loss += loss;
                correct += (classify(p, tc.threshold) == y) as usize;
                total.add_assign(&g);
            }
            if !batch_loss.is_finite() || !total.all_finite() {
                return Err(diverged(epoch, b, batch_loss));
            }
            loss_sum += batch_loss;
            total.scale(1.0 / batch.len() as f64);
            adam_step(&mut model, &total, &mut opt)?;
        }
        let n = train_idx.len() as f64;
        let (valid_loss, valid_accuracy) = if valid_idx.is_empty() {
            (None, None)
        } else {
            let probs = predict_indices(&model, images, valid_idx)?;
            let mut loss = 0.0;
            let mut hits = 0usize;
            for (&p, &y) in probs.iter().zip(&valid_labels) {
                loss += bce_loss(p, y.target());
                hits += (classify(p, tc.threshold) == y) as usize;
            }
            let m = valid_idx.len() as f64;
            (Some(loss / m), Some(hits as f64 / m))
        };
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            valid_loss,
            valid_accuracy,
        };
        log::info!(
            "epoch {:>3}: train loss {:.4} acc {:.4} | valid loss {} acc {}",
            epoch + 1,
            rec.train_loss,
            rec.train_accuracy,
            valid_loss.map_or("-".into(), |v| format!("{v:.4}")),
            valid_accuracy.map_or("-".into(), |v| format!("{v:.4}")),
        );
        if let Some(acc) = valid_accuracy {
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, model.clone()));
            }
        }
        records.push(rec);
    }

    let (best_epoch, best_model) = match best {
        Some((_, e, m)) => (Some(e), m),
        None => (None, model.clone()),
    };
    Ok(TrainOutcome {
        final_checkpoint: Checkpoint {
            model,
            optimizer: Some(opt),
        },
        best_checkpoint: Checkpoint::new(best_model),
        best_epoch,
        records,
    })
}

//! Mini-batch training with SGD + momentum, periodic validation, evaluation and
//! single-image prediction.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{load_preprocessed, AugmentationConfig, BatchIterator, LoadedDataset};
use crate::error::{Error, Result};
use crate::layers::{softmax, Mode};
use crate::loss::cross_entropy;
use crate::metrics::{confusion, ConfusionMatrix, HistoryRow, MetricsRecord, TrainingHistory};
use crate::model::Network;
use crate::optim::{SgdMomentum, DEFAULT_MOMENTUM};
use crate::tensor::Tensor;

/// Batch size used for inference passes (validation, evaluation).
const INFER_BATCH: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Validate every this many iterations.
    pub validation_frequency: usize,
    pub seed: u64,
    pub image_size: usize,
    pub augmentation: AugmentationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 8,
            batch_size: 32,
            learning_rate: 1e-4,
            momentum: DEFAULT_MOMENTUM,
            validation_frequency: 50,
            seed: 42,
            image_size: 224,
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.validation_frequency == 0 || self.image_size == 0 {
            return Err(Error::config("epochs, batch size, validation frequency and image size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        self.augmentation.validate()
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Network,
    pub history: TrainingHistory,
    pub wall_seconds: f64,
}

impl TrainOutcome {
    pub fn iterations(&self) -> usize {
        self.history.last().map_or(0, |r| r.iteration)
    }
}

/// Runs `cfg.epochs` epochs over `train_data`, one optimizer step per mini-batch.
///
/// Training accuracy and loss are recorded per iteration from the train-mode forward pass.
/// Every `validation_frequency` iterations `val_data` (if any) is scored in infer mode.
/// The final-epoch weights are returned.
pub fn train(
    mut model: Network,
    train_data: &LoadedDataset,
    val_data: Option<&LoadedDataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_compatible(&model, train_data, "training")?;
    if let Some(val) = val_data {
        check_compatible(&model, val, "validation")?;
    }
    let batches = BatchIterator::new(train_data, cfg.batch_size, true, cfg.seed)?
        .with_augmentation(cfg.augmentation.clone())?;
    let mut optimizer = SgdMomentum::new(cfg.learning_rate, cfg.momentum)?;
    let mut history = TrainingHistory::new();
    let start = Instant::now();
    let mut iteration = 0;

    for epoch in 0..cfg.epochs {
        for (x, labels) in batches.batches(epoch) {
            iteration += 1;
            let logits = model.forward(&x, Mode::Train)?;
            let loss = cross_entropy(&logits, &labels)?;
            if !loss.mean_loss.is_finite() {
                return Err(Error::State(format!("loss became {} at iteration {iteration}", loss.mean_loss)));
            }
            let train_acc = batch_accuracy(&logits, &labels);
            model.backward(&loss.grad_logits)?;
            optimizer.step_params(&mut model.params_mut())?;
            model.clear_cache();

            let mut row = HistoryRow {
                iteration,
                train_acc,
                train_loss: loss.mean_loss,
                val_acc: None,
                val_loss: None,
            };
            if let (Some(val), true) = (val_data, iteration % cfg.validation_frequency == 0) {
                let (preds, val_loss) = infer_all(&mut model, val)?;
                let correct = preds.iter().zip(&val.labels).filter(|(p, t)| p == t).count();
                row.val_acc = Some(correct as f64 / val.len() as f64);
                row.val_loss = Some(val_loss);
                log::info!(
                    "epoch {} iter {iteration}: train loss {:.4} acc {:.3}, val loss {val_loss:.4} acc {:.3}",
                    epoch + 1,
                    row.train_loss,
                    row.train_acc,
                    row.val_acc.unwrap_or_default()
                );
            } else {
                log::debug!("epoch {} iter {iteration}: loss {:.4} acc {:.3}", epoch + 1, row.train_loss, train_acc);
            }
            history.push(row)?;
        }
    }
    Ok(TrainOutcome { model, history, wall_seconds: start.elapsed().as_secs_f64() })
}

fn check_compatible(model: &Network, data: &LoadedDataset, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Data(format!("{what} set is empty")));
    }
    if data.num_classes() != model.num_classes() {
        return Err(Error::config(format!(
            "{what} set has {} classes but the model outputs {}",
            data.num_classes(),
            model.num_classes()
        )));
    }
    let [_, h, w] = model.spec().input;
    if data.image_size != h || data.image_size != w {
        return Err(Error::shape(format!(
            "{what} images are {0}x{0} but the model expects {h}x{w}",
            data.image_size
        )));
    }
    Ok(())
}

fn batch_accuracy(logits: &Tensor<f32>, labels: &[usize]) -> f64 {
    let preds = logits.argmax_axis(1).expect("logits are [N,K]");
    preds.iter().zip(labels).filter(|(p, t)| p == t).count() as f64 / labels.len() as f64
}

/// Infer-mode predictions for every sample, plus the mean cross-entropy.
fn infer_all(model: &mut Network, data: &LoadedDataset) -> Result<(Vec<usize>, f64)> {
    let mut preds = Vec::with_capacity(data.len());
    let mut loss_sum = 0.0;
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(INFER_BATCH) {
        let (x, labels) = data.gather(idx);
        let logits = model.forward(&x, Mode::Infer)?;
        model.clear_cache();
        loss_sum += cross_entropy(&logits, &labels)?.mean_loss * labels.len() as f64;
        preds.extend(softmax(&logits)?.argmax_axis(1)?);
    }
    Ok((preds, loss_sum / data.len() as f64))
}

/// Infer-mode predictions (argmax of softmax) over `data`.
pub fn predict_labels(model: &mut Network, data: &LoadedDataset) -> Result<Vec<usize>> {
    check_compatible(model, data, "test")?;
    Ok(infer_all(model, data)?.0)
}

/// Confusion matrix and metrics over `test_data`. `training_time_s` is left at 0.
pub fn evaluate(model: &mut Network, test_data: &LoadedDataset) -> Result<(ConfusionMatrix, MetricsRecord)> {
    let preds = predict_labels(model, test_data)?;
    let cm = confusion(&test_data.labels, &preds, model.num_classes())?
        .with_class_names(test_data.class_names.clone())?;
    let record = MetricsRecord::from_confusion(&cm, 0.0)?;
    Ok((cm, record))
}

/// Classifies one image file: returns the winning class name and all probabilities.
pub fn predict(model: &mut Network, image_path: &Path, class_names: &[String]) -> Result<(String, Vec<f32>)> {
    if class_names.len() != model.num_classes() {
        return Err(Error::config(format!(
            "{} class names for a {}-class model",
            class_names.len(),
            model.num_classes()
        )));
    }
    let size = model.spec().input[1];
    let pixels = load_preprocessed(image_path, size)?;
    let x = pixels.reshape(&[1, 3, size, size])?;
    let probs = model.predict_proba(&x)?.into_data();
    let best = Tensor::from_vec(&[1, probs.len()], probs.clone())?.argmax_axis(1)?[0];
    Ok((class_names[best].clone(), probs))
}

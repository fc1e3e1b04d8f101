//! Training loop, evaluation, dataset splitting and curve export.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{random_augment, AugmentConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::{confusion_counts, cross_entropy_with_labels, ConfusionCounts};
use crate::model::{argmax, Model, ALL_FROZEN};
use crate::optim::{RmspropConfig, RmspropState};
use crate::parallel::{stream, StreamKind};
use crate::tensor::Tensor;

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta: f64,
    pub epsilon: f64,
    /// First trainable layer. `ALL_FROZEN` (or `ALL`) freezes everything;
    /// `None` (or `none`) trains every layer.
    pub freeze_boundary: Option<String>,
    pub augment: AugmentConfig,
    pub seed: u64,
    pub val_split: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr: 2e-5,
            beta: 0.9,
            epsilon: 1e-8,
            freeze_boundary: None,
            augment: AugmentConfig::default(),
            seed: 0,
            val_split: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.val_split > 0.0 && self.val_split < 1.0) {
            return Err(Error::Config(format!("val_split {} must be in (0, 1)", self.val_split)));
        }
        self.optimizer().validate()?;
        self.augment.validate()
    }

    pub fn optimizer(&self) -> RmspropConfig {
        RmspropConfig {
            lr: self.lr,
            beta: self.beta,
            epsilon: self.epsilon,
        }
    }

    /// Apply the freeze boundary to `model`.
    pub fn apply_freeze(&self, model: &mut Model) -> Result<()> {
        match self.freeze_boundary.as_deref() {
            None | Some("none") => {
                let first = model.layers()[0].name.clone();
                model.set_trainable_boundary(&first)
            }
            Some("ALL") => model.set_trainable_boundary(ALL_FROZEN),
            Some(name) => model.set_trainable_boundary(name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub seconds: f64,
}

impl EpochRecord {
    /// Everything except the wall-clock time.
    pub fn metrics(&self) -> (usize, f64, f64, f64, f64) {
        (self.epoch, self.train_loss, self.train_acc, self.val_loss, self.val_acc)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub optimizer: RmspropState,
    pub report: TrainReport,
}

/// Stratified split: for each class, `ceil(n_c * val_frac)` samples chosen
/// by a seeded shuffle go to validation (at most `n_c - 1`). Both halves
/// keep the input order.
pub fn split(dataset: &Dataset, val_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(Error::Split(format!("validation fraction {val_frac} must be in (0, 1)")));
    }
    if dataset.is_empty() {
        return Err(Error::Split("cannot split an empty dataset".into()));
    }
    let mut is_val = vec![false; dataset.len()];
    for class in 0..dataset.class_count() {
        let mut members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.samples[i].label == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::Split(format!(
                "class `{}` has {} sample(s); at least 2 are needed",
                dataset.class_names[class],
                members.len()
            )));
        }
        members.shuffle(&mut stream(seed, StreamKind::Split, class as u64, 0));
        let take = ((members.len() as f64 * val_frac).ceil() as usize).min(members.len() - 1);
        for &i in &members[..take] {
            is_val[i] = true;
        }
    }
    let (val, train): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| is_val[i]);
    Ok((dataset.subset(&train), dataset.subset(&val)))
}

fn stack(images: &[Tensor]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::input("empty batch"))?;
    let mut dims = vec![images.len()];
    dims.extend_from_slice(first.dims());
    let mut data = Vec::with_capacity(images.len() * first.len());
    for img in images {
        if img.dims() != first.dims() {
            return Err(Error::shape("batch images have different shapes"));
        }
        data.extend_from_slice(img.data());
    }
    Tensor::from_vec(&dims, data)
}

fn check_classes(model: &Model, data: &Dataset) -> Result<()> {
    if model.class_count() != data.class_count() {
        return Err(Error::Config(format!(
            "model predicts {} classes but the dataset has {}",
            model.class_count(),
            data.class_count()
        )));
    }
    Ok(())
}

/// Split `data`, then train with [`train_split`].
pub fn train(model: Model, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    check_classes(&model, data)?;
    let (train_set, val_set) = split(data, config.val_split, config.seed)?;
    train_split(model, &train_set, &val_set, config, |_| {})
}

/// Train on `train_set` and validate on `val_set` after every epoch.
/// `on_epoch` sees each record as it is produced.
pub fn train_split(
    mut model: Model,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    check_classes(&model, train_set)?;
    check_classes(&model, val_set)?;
    if train_set.is_empty() {
        return Err(Error::input("training set is empty"));
    }
    config.apply_freeze(&mut model)?;
    let mut optimizer = RmspropState::new(&model, config.optimizer())?;
    let mut report = TrainReport::default();
    let seed = config.seed;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let e = epoch as u64;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut stream(seed, StreamKind::Shuffle, e, 0));

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let images = batch
                .par_iter()
                .map(|&i| {
                    let mut rng = stream(seed, StreamKind::Augment, e, i as u64);
                    random_augment(&train_set.samples[i].image, &config.augment, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let inputs = stack(&images)?;
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.samples[i].label).collect();
            let mut dropout: Vec<_> = batch
                .iter()
                .map(|&i| stream(seed, StreamKind::Dropout, e, i as u64))
                .collect();

            let (probs, trace) = model.forward_with_trace(&inputs, true, &mut dropout)?;
            let loss = cross_entropy_with_labels(&probs, &labels)?;
            if !loss.value.is_finite() || !probs.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {}, batch starting with sample {}",
                    epoch + 1,
                    batch[0]
                )));
            }
            let grads = model.backward(&trace, &loss.grad, false)?;
            optimizer.step(&mut model, &grads)?;

            loss_sum += loss.value * batch.len() as f64;
            let k = model.class_count();
            correct += probs
                .data()
                .chunks(k)
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
        }
        let val = evaluate(&model, val_set)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_loss: val.loss,
            val_acc: val.accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        report.records.push(record);
    }
    Ok(TrainOutcome {
        model,
        optimizer,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: Vec<ConfusionCounts>,
    pub predictions: Vec<usize>,
}

/// Inference-mode loss, accuracy and per-class confusion counts.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<Evaluation> {
    check_classes(model, data)?;
    if data.is_empty() {
        return Err(Error::input("cannot evaluate an empty dataset"));
    }
    let k = model.class_count();
    let mut loss_sum = 0.0;
    let mut predictions = Vec::with_capacity(data.len());
    for chunk in data.samples.chunks(EVAL_BATCH) {
        let images: Vec<Tensor> = chunk.iter().map(|s| s.image.clone()).collect();
        let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let probs = model.forward(&stack(&images)?)?;
        let loss = cross_entropy_with_labels(&probs, &labels)?;
        if !loss.value.is_finite() {
            return Err(Error::Numeric("non-finite evaluation loss".into()));
        }
        loss_sum += loss.value * chunk.len() as f64;
        predictions.extend(probs.data().chunks(k).map(argmax));
    }
    let truth = data.labels();
    let accuracy = crate::loss::accuracy(&predictions, &truth)?;
    Ok(Evaluation {
        loss: loss_sum / data.len() as f64,
        accuracy,
        confusion: confusion_counts(&predictions, &truth, k)?,
        predictions,
    })
}

pub const CURVES_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

/// Write per-epoch metrics as CSV with nine significant digits.
pub fn export_curves<W: Write>(report: &TrainReport, mut sink: W) -> Result<()> {
    if report.records.is_empty() {
        return Err(Error::input("report has no epochs"));
    }
    writeln!(sink, "{CURVES_HEADER}")?;
    for r in &report.records {
        writeln!(
            sink,
            "{},{:.8e},{:.8e},{:.8e},{:.8e}",
            r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
        )?;
    }
    sink.flush()?;
    Ok(())
}

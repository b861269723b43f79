//! Two-stage optimisation: supervised pre-training on the perceptual
//! objective, then distillation from stored teacher predictions.

mod adam;
mod dataset;

pub use adam::{adam_step, AdamParams, AdamState};
pub use dataset::{
    prepare_patches, read_tensor_file, strip_qp, write_tensor_file, Augment, PatchDataset, PatchRecord, PrepareOptions,
    TeacherKind, DEFAULT_PATCH,
};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{distill_loss, perceptual_loss, DistillConfig, LossError, LossValue};
use crate::model::{backward_cached, build_model, forward_cached, ModelConfig, ModelError, ModelWeights};
use crate::tensor::Tensor;
use crate::video::VideoError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid recipe: {0}")]
    Recipe(String),
    #[error("dataset is empty")]
    Empty,
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("record `{id}` has no prediction from teacher `{teacher}`")]
    MissingTeacher { id: String, teacher: String },
    #[error("non-finite loss or gradient at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("optimizer: {0}")]
    Optimizer(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Supervised,
    Distill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecipe {
    pub model: ModelConfig,
    pub stage: Stage,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub adam: AdamParams,
    /// Ground-truth weight of the distillation objective.
    pub alpha: f64,
    pub seed: u64,
    /// Stop after this many optimiser steps, even mid-epoch.
    pub max_steps: Option<usize>,
}

impl TrainRecipe {
    pub fn new(model: ModelConfig, stage: Stage) -> Self {
        TrainRecipe {
            model,
            stage,
            epochs: 100,
            batch_size: 16,
            lr0: 1e-4,
            lr_decay_factor: 0.1,
            lr_decay_every: 50,
            adam: AdamParams::default(),
            alpha: 0.1,
            seed: 0,
            max_steps: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: &str| Err(TrainError::Recipe(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be at least 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) || !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("lr0 must be positive and lr_decay_factor in (0, 1]");
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || a.eps.is_nan()
            || a.eps <= 0.0
            || a.weight_decay.is_nan()
            || a.weight_decay < 0.0
        {
            return bad("adam betas must lie in [0, 1), eps > 0, weight_decay >= 0");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        Ok(())
    }
}

/// Step schedule `lr0 · factor^⌊epoch / every⌋`.
pub fn lr_at(epoch: usize, recipe: &TrainRecipe) -> f64 {
    recipe.lr0 * recipe.lr_decay_factor.powi((epoch / recipe.lr_decay_every) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRow {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LossLog {
    pub rows: Vec<LogRow>,
    /// Mean batch loss of every completed (or truncated final) epoch.
    pub epoch_means: Vec<f64>,
}

impl LossLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,step,lr,loss\n");
        for r in &self.rows {
            writeln!(s, "{},{},{:e},{:.9}", r.epoch, r.step, r.lr, r.loss).unwrap();
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub log: LossLog,
}

/// Passed to the progress callback after every epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochReport<'a> {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
    pub weights: &'a ModelWeights,
}

pub type Progress<'a> = &'a mut dyn FnMut(&EpochReport);

/// Record order for `epoch`, a Fisher-Yates shuffle seeded from the recipe
/// seed and the epoch index.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

fn stack(items: impl Iterator<Item = Tensor>) -> Result<Tensor> {
    let v: Vec<Tensor> = items.collect();
    Ok(Tensor::stack(&v).map_err(ModelError::from)?)
}

fn check_dataset(dataset: &PatchDataset, recipe: &TrainRecipe) -> Result<()> {
    if dataset.is_empty() {
        return Err(TrainError::Empty);
    }
    if dataset.scale != recipe.model.scale {
        return Err(TrainError::Recipe(format!(
            "dataset is ×{} but the model is ×{}",
            dataset.scale, recipe.model.scale
        )));
    }
    Ok(())
}

fn run(
    dataset: &PatchDataset,
    recipe: &TrainRecipe,
    mut weights: ModelWeights,
    loss_fn: &dyn Fn(&Tensor, &[usize]) -> Result<LossValue>,
    progress: Progress,
) -> Result<TrainOutcome> {
    recipe.validate()?;
    check_dataset(dataset, recipe)?;
    if weights.config != recipe.model {
        return Err(TrainError::Recipe(format!(
            "initial weights are {} but the recipe asks for {}",
            weights.config, recipe.model
        )));
    }
    let mut state = AdamState::new(&weights);
    let mut log = LossLog::default();
    let mut step = 0;
    'epochs: for epoch in 0..recipe.epochs {
        let lr = lr_at(epoch, recipe);
        let order = epoch_order(dataset.len(), recipe.seed, epoch);
        let mut sum = 0.0;
        let mut count = 0;
        for (batch, idx) in order.chunks(recipe.batch_size).enumerate() {
            if recipe.max_steps.is_some_and(|m| step >= m) {
                if count > 0 {
                    log.epoch_means.push(sum / count as f64);
                    progress(&EpochReport {
                        epoch,
                        mean_loss: sum / count as f64,
                        steps: step,
                        weights: &weights,
                    });
                }
                break 'epochs;
            }
            let input = stack(idx.iter().map(|&i| dataset.records[i].lr.clone()))?;
            let (pred, cache) = forward_cached(&weights, &input)?;
            let loss = loss_fn(&pred, idx)?;
            if !loss.value.is_finite() || !loss.grad.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch });
            }
            let grads = backward_cached(&weights, &cache, &loss.grad)?;
            if !grads.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch });
            }
            adam_step(&mut weights, &grads, &mut state, lr, &recipe.adam)?;
            log.rows.push(LogRow {
                epoch,
                step,
                lr,
                loss: loss.value,
            });
            sum += loss.value;
            count += 1;
            step += 1;
        }
        log.epoch_means.push(sum / count as f64);
        progress(&EpochReport {
            epoch,
            mean_loss: sum / count as f64,
            steps: step,
            weights: &weights,
        });
    }
    Ok(TrainOutcome { weights, log })
}

/// Stage 1 from a fresh He-initialised model.
pub fn train_stage1(dataset: &PatchDataset, recipe: &TrainRecipe) -> Result<TrainOutcome> {
    let init = build_model(recipe.model, recipe.seed)?;
    train_stage1_from(dataset, recipe, init, &mut |_| {})
}

/// Stage 1 on the perceptual objective, starting from `init`.
pub fn train_stage1_from(
    dataset: &PatchDataset,
    recipe: &TrainRecipe,
    init: ModelWeights,
    progress: Progress,
) -> Result<TrainOutcome> {
    let loss = |pred: &Tensor, idx: &[usize]| -> Result<LossValue> {
        let hr = stack(idx.iter().map(|&i| dataset.records[i].hr.clone()))?;
        Ok(perceptual_loss(pred, &hr)?)
    };
    run(dataset, recipe, init, &loss, progress)
}

/// Stage 2: distillation from every teacher stored in the dataset, with a
/// fresh optimiser state.
pub fn train_stage2(
    dataset: &PatchDataset,
    student: ModelWeights,
    recipe: &TrainRecipe,
    progress: Progress,
) -> Result<TrainOutcome> {
    let k = dataset.teacher_names.len();
    if k == 0 {
        return Err(TrainError::Dataset("stage 2 needs at least one teacher".into()));
    }
    for r in &dataset.records {
        if r.teachers.len() != k {
            return Err(TrainError::MissingTeacher {
                id: r.id.clone(),
                teacher: dataset.teacher_names[r.teachers.len().min(k - 1)].clone(),
            });
        }
    }
    let cfg = DistillConfig {
        alpha: recipe.alpha,
        ..DistillConfig::default()
    };
    let loss = |pred: &Tensor, idx: &[usize]| -> Result<LossValue> {
        let hr = stack(idx.iter().map(|&i| dataset.records[i].hr.clone()))?;
        let teachers = (0..k)
            .map(|t| stack(idx.iter().map(|&i| dataset.records[i].teachers[t].clone())))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor> = teachers.iter().collect();
        Ok(distill_loss(pred, &hr, &refs, &cfg)?)
    };
    run(dataset, recipe, student, &loss, progress)
}

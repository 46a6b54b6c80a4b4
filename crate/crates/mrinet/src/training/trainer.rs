//! The training loop: per-epoch batch iteration with augmentation and
//! dropout active, validation with both disabled, per-epoch checkpointing,
//! and deterministic metric accumulation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use super::adam::AdamOptimizer;
use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use super::config::{BackboneMode, BnTrainMode, TrainConfig};
use super::history::{EpochRow, History};
use super::loss::sparse_categorical_crossentropy;
use crate::autograd::Tape;
use crate::blocks::ExecMode;
use crate::data::{batch_iter, class_name, decode_and_resize, preprocess, BatchOptions, DatasetIndex, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, ParamGroup};
use crate::seeding::mix_seeds;
use crate::tensor::Tensor;

/// Row argmax with ties broken toward the lowest class id.
pub fn argmax_row(row: &[f32]) -> usize {
    let mut best = 0;
    let mut best_v = f32::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Result of [`train_model`].
pub struct TrainOutput {
    pub graph: NetworkGraph,
    pub history: History,
    pub optimizer: AdamOptimizer<f32>,
    /// Path of the final checkpoint when an output directory was given.
    pub final_checkpoint: Option<PathBuf>,
}

fn exec_mode_for(config: &TrainConfig) -> ExecMode {
    // Frozen backbones keep their running statistics: batch-stats
    // normalization would silently mutate backbone state. The head carries no
    // batch norm, so nothing is lost.
    let batch_stats =
        config.bn_mode == BnTrainMode::Batch && config.backbone_mode != BackboneMode::Frozen;
    ExecMode::Train { bn_batch_stats: batch_stats }
}

fn batch_options(config: &TrainConfig, epoch: u64, augment: bool) -> BatchOptions {
    BatchOptions {
        batch_size: config.batch_size,
        input_size: config.input_size,
        preprocess: config.effective_preprocessing(),
        augment: augment.then_some(config.augment),
        shuffle_seed: config.seed,
        epoch,
    }
}

/// Run one training step on a batch; returns `(mean loss, correct count)`.
fn train_step(
    graph: &mut NetworkGraph,
    optimizer: &mut AdamOptimizer<f32>,
    config: &TrainConfig,
    tape: &mut Tape<f32>,
    images: Tensor<f32>,
    labels: &[usize],
    epoch: u64,
    step: u64,
) -> Result<(f64, usize)> {
    tape.reset();
    let dropout_base = mix_seeds(&[config.seed, epoch, step, 0xD0]);
    let run = graph.run(tape, images, exec_mode_for(config), dropout_base)?;
    let (loss_id, probs) = tape.softmax_cross_entropy(run.logits, labels)?;
    let loss = tape.value(loss_id)?.scalar_value() as f64;
    if !loss.is_finite() {
        return Err(Error::TrainingHalt {
            what: format!("non-finite loss at epoch {} step {}", epoch + 1, step + 1),
        });
    }
    let grads = tape.backward_scalar(loss_id)?;

    let frozen = config.backbone_mode == BackboneMode::Frozen;
    for slot in graph.slots().to_vec() {
        if !slot.trainable || (frozen && slot.group == ParamGroup::Backbone) {
            continue;
        }
        let grad = grads.get(run.param_ids[&slot.name])?;
        optimizer.step_param(&slot.name, graph.param_mut(&slot.name)?, &grad)?;
    }
    graph.apply_bn_updates(run.bn_updates);

    let mut correct = 0;
    let k = probs.shape()[1];
    for (row, &label) in probs.data().chunks_exact(k).zip(labels) {
        if argmax_row(row) == label {
            correct += 1;
        }
    }
    Ok((loss, correct))
}

/// Loss, accuracy, and the 5x5 confusion matrix (rows = true class).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

impl Evaluation {
    /// Accuracy recomputed from the matrix: `1 - offdiagonal/total`.
    pub fn accuracy_from_confusion(&self) -> f64 {
        let total: usize = self.confusion.iter().flatten().sum();
        let off: usize = self
            .confusion
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum::<usize>())
            .sum();
        1.0 - off as f64 / total as f64
    }
}

/// Deterministic evaluation: no augmentation, no dropout, running batch-norm
/// statistics, records visited in index order.
pub fn evaluate(graph: &NetworkGraph, index: &DatasetIndex, config: &TrainConfig) -> Result<Evaluation> {
    if index.is_empty() {
        return Err(Error::EmptyIndex { what: "evaluation" });
    }
    let opts = batch_options(config, 0, false);
    let stream = batch_iter(index, &opts)?;
    let positions: Vec<usize> = (0..index.len()).collect();
    let mut total_loss = 0.0f64;
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    let mut correct = 0usize;
    let mut tape = Tape::new();
    for chunk in positions.chunks(config.batch_size) {
        let (images, labels) = stream.load(chunk)?;
        tape.reset();
        let run = graph.run(&mut tape, images, ExecMode::Infer, 0)?;
        let probs = tape.value(run.probs)?;
        let batch_loss = sparse_categorical_crossentropy(probs, &labels)? as f64;
        total_loss += batch_loss * labels.len() as f64;
        let k = probs.shape()[1];
        for (row, &label) in probs.data().chunks_exact(k).zip(&labels) {
            let pred = argmax_row(row);
            confusion[label][pred] += 1;
            if pred == label {
                correct += 1;
            }
        }
    }
    Ok(Evaluation {
        loss: total_loss / index.len() as f64,
        accuracy: correct as f64 / index.len() as f64,
        confusion,
    })
}

/// Ranked class probabilities for one image, most likely first (ties broken
/// toward the lower class id).
pub fn predict(
    graph: &NetworkGraph,
    image_path: &Path,
    config: &TrainConfig,
) -> Result<Vec<(String, f64)>> {
    let (h, w) = config.input_size;
    let img = decode_and_resize(image_path, (h, w))?;
    let img = preprocess(&img, config.effective_preprocessing());
    let batch = img.reshape(vec![1, h, w, 3])?;
    let mut tape = Tape::new();
    let run = graph.run(&mut tape, batch, ExecMode::Infer, 0)?;
    let probs = tape.value(run.probs)?;
    let mut ranked: Vec<(String, f64)> = probs
        .data()
        .iter()
        .enumerate()
        .map(|(i, &p)| (class_name(i).unwrap_or("?").to_string(), p as f64))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    Ok(ranked)
}

/// Write the per-epoch checkpoint (`epoch_XXX.ckpt`).
fn epoch_checkpoint_path(out_dir: &Path, epoch: usize) -> PathBuf {
    out_dir.join(format!("epoch_{epoch:03}.ckpt"))
}

/// Train per the configured recipe, optionally resuming from a checkpoint.
///
/// Per epoch: iterate shuffled training batches with augmentation and
/// dropout active, then evaluate validation with both disabled, append a
/// history row, and (when `out_dir` is given) write a checkpoint. On a
/// non-finite loss, training halts with the last per-epoch checkpoint
/// retained on disk.
pub fn train_model(
    config: &TrainConfig,
    train_index: &DatasetIndex,
    val_index: &DatasetIndex,
    out_dir: Option<&Path>,
    resume_from: Option<&Path>,
) -> Result<TrainOutput> {
    config.validate()?;
    if train_index.is_empty() || val_index.is_empty() {
        return Err(Error::EmptyIndex { what: "training" });
    }
    let (h, w) = config.input_size;
    let mut graph = config.model.build((h, w, 3), NUM_CLASSES)?;
    graph.init_params(config.seed);
    let mut optimizer = AdamOptimizer::new(config.adam_config());
    let mut start_epoch = 0usize;
    let config_echo = serde_json::to_value(config.effective())
        .map_err(|e| Error::Config { what: format!("config echo: {e}") })?;

    if let Some(path) = resume_from {
        let ckpt = load_checkpoint(path)?;
        if ckpt.model_id != graph.model_id() {
            return Err(Error::Checkpoint {
                what: format!(
                    "resume model {} does not match configured {}",
                    ckpt.model_id,
                    graph.model_id()
                ),
            });
        }
        ckpt.install(&mut graph)?;
        if let Some(snap) = &ckpt.adam {
            optimizer = AdamOptimizer::restore(config.adam_config(), snap)?;
        }
        start_epoch = ckpt.epoch;
    }

    let mut history = History::default();
    let mut last_good: Option<PathBuf> = None;
    let mut tape = Tape::new();
    for epoch in start_epoch..config.epochs {
        let started = Instant::now();
        let opts = batch_options(config, epoch as u64, true);
        let stream = batch_iter(train_index, &opts)?;
        let plan: Vec<Vec<usize>> = crate::data::epoch_plan(
            train_index.len(),
            config.batch_size,
            config.seed,
            epoch as u64,
        )?;
        let mut epoch_loss = 0.0f64;
        let mut epoch_correct = 0usize;
        for (step, positions) in plan.iter().enumerate() {
            let (images, labels) = stream.load(positions)?;
            let (loss, correct) = train_step(
                &mut graph,
                &mut optimizer,
                config,
                &mut tape,
                images,
                &labels,
                epoch as u64,
                step as u64,
            )
            .map_err(|e| annotate_halt(e, &last_good))?;
            epoch_loss += loss * labels.len() as f64;
            epoch_correct += correct;
        }
        let val = evaluate(&graph, val_index, config)?;
        history.push(EpochRow {
            epoch: epoch + 1,
            train_loss: epoch_loss / train_index.len() as f64,
            train_acc: epoch_correct as f64 / train_index.len() as f64,
            val_loss: val.loss,
            val_acc: val.accuracy,
            seconds: started.elapsed().as_secs_f64(),
        });
        if let Some(dir) = out_dir {
            let path = epoch_checkpoint_path(dir, epoch + 1);
            let ckpt = Checkpoint::from_graph(&graph, config_echo.clone(), epoch + 1, Some(&optimizer));
            save_checkpoint(&ckpt, &path)?;
            last_good = Some(path);
        }
    }

    let final_checkpoint = match out_dir {
        Some(dir) => {
            let path = dir.join("final.ckpt");
            let ckpt =
                Checkpoint::from_graph(&graph, config_echo.clone(), config.epochs, Some(&optimizer));
            save_checkpoint(&ckpt, &path)?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainOutput { graph, history, optimizer, final_checkpoint })
}

fn annotate_halt(err: Error, last_good: &Option<PathBuf>) -> Error {
    match err {
        Error::TrainingHalt { what } => {
            let suffix = match last_good {
                Some(p) => format!("; last good checkpoint: {}", p.display()),
                None => "; no checkpoint written yet".into(),
            };
            Error::TrainingHalt { what: format!("{what}{suffix}") }
        }
        other => other,
    }
}

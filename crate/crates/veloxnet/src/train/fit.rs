//! The epoch loop (train → validate → checkpoint-on-best) and split
//! evaluation.

use super::adam::{AdamConfig, AdamState};
use super::metrics::{metrics_from_confusion, MetricsReport};
use crate::data::{batches, save_checkpoint, AugmentMode, Manifest, Split};
use crate::error::{Error, Result};
use crate::layers::{softmax_cross_entropy, Mode};
use crate::models::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

#[derive(Clone, Debug)]
pub struct FitConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    /// Overwritten whenever validation weighted-F1 strictly improves.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_weighted_f1: f64,
}

/// Trains `model` on the manifest's train split, evaluating the val split
/// after every epoch. `on_epoch` can stop training early by returning false;
/// pass `|_, _| true` for the plain loop.
pub fn fit(
    model: &mut Model<f32>,
    manifest: &Manifest,
    cfg: &FitConfig,
    mut on_epoch: impl FnMut(&mut Model<f32>, &EpochRow) -> bool,
) -> Result<Vec<EpochRow>> {
    let mut adam = AdamState::new(model, AdamConfig::with_lr(cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best_f1 = f64::NEG_INFINITY;
    for epoch in 1..=cfg.epochs {
        let stream = batches(
            manifest,
            Split::Train,
            cfg.batch,
            true,
            AugmentMode::Train,
            ChaCha8Rng::seed_from_u64(rand::Rng::gen(&mut rng)),
        )?;
        let total = stream.len_samples() as f64;
        let mut train_loss = 0.0f64;
        for (batch_no, item) in stream.enumerate() {
            let step = |e: Error| {
                Error::Numeric(format!("epoch {epoch} batch {}: {e}", batch_no + 1))
            };
            let (batch, labels) = item?;
            let n = batch.shape()[0] as f64;
            model.zero_grads();
            let logits = model.forward(&batch, Mode::Train).map_err(step)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &labels).map_err(step)?;
            model.backward(&dlogits).map_err(step)?;
            adam.step(model).map_err(step)?;
            train_loss += loss as f64 * n / total;
        }
        let val = evaluate(model, manifest, Split::Val)?;
        let row = EpochRow {
            epoch,
            train_loss,
            val_loss: val.loss,
            val_weighted_f1: val.weighted_f1,
        };
        if val.weighted_f1 > best_f1 {
            best_f1 = val.weighted_f1;
            if let Some(path) = &cfg.checkpoint {
                save_checkpoint(path, model)?;
            }
        }
        log.push(row);
        if !on_epoch(model, &row) {
            break;
        }
    }
    Ok(log)
}

/// Infer-mode evaluation of one split: confusion matrix, weighted metrics
/// and mean loss. Predictions are argmax with ties toward the lowest class.
pub fn evaluate(model: &mut Model<f32>, manifest: &Manifest, split: Split) -> Result<MetricsReport> {
    let k = model.graph.classes();
    let stream = batches(
        manifest,
        split,
        32,
        false,
        AugmentMode::Eval,
        ChaCha8Rng::seed_from_u64(0),
    )?;
    let total = stream.len_samples() as f64;
    let mut confusion = vec![vec![0u64; k]; k];
    let mut loss_acc = 0.0f64;
    for item in stream {
        let (batch, labels) = item?;
        let n = batch.shape()[0];
        let logits = model.forward(&batch, Mode::Infer)?;
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        loss_acc += loss as f64 * n as f64 / total;
        for (row, &label) in logits.data().chunks_exact(k).zip(&labels) {
            let mut pred = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[pred] {
                    pred = j;
                }
            }
            confusion[label][pred] += 1;
        }
    }
    Ok(metrics_from_confusion(&confusion, loss_acc))
}

/// CSV log: `epoch,train_loss,val_loss,val_weighted_f1`, one row per epoch.
pub fn write_log_csv(path: impl AsRef<std::path::Path>, rows: &[EpochRow]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,val_weighted_f1\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            r.epoch, r.train_loss, r.val_loss, r.val_weighted_f1
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

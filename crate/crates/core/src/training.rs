//! The training loop: MAE on normalized targets, Adam with a step learning-rate schedule,
//! per-pass or per-epoch graph sampling, best-validation model selection.

use std::time::Instant;

use ndarray::{s, Array3, ArrayView4};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::{ForecastModel, Grads};
use crate::bgcn::{DropoutMask, GraphSampleScope};
use crate::data::Splits;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalOptions, MetricReport};
use crate::optim::{clip_global_norm, Adam};
use crate::rng::{mix, stream, stream_rng};

/// Samples whose gradients are summed sequentially before the chunk sums are combined
/// in a fixed order. Results do not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    /// First (1-indexed) epoch that uses `lr_after`.
    pub lr_drop_epoch: usize,
    pub lr_after: f64,
    pub grad_clip: Option<f64>,
    pub seed: u64,
    pub graph_sample_scope: GraphSampleScope,
    /// Update the graph learnables (φ, or the adaptive embeddings).
    pub train_graph: bool,
    /// Update the network weights.
    pub train_weights: bool,
    /// Caps the batches drawn per epoch; `None` runs through the whole shuffled split.
    pub max_batches_per_epoch: Option<usize>,
    /// Validate with Monte Carlo averaging instead of the expected graph.
    pub mc_eval: bool,
    pub mc_samples: usize,
    pub mask_zero: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            lr_init: 0.001,
            lr_drop_epoch: 50,
            lr_after: 0.0001,
            grad_clip: None,
            seed: 0,
            graph_sample_scope: GraphSampleScope::Batch,
            train_graph: true,
            train_weights: true,
            max_batches_per_epoch: None,
            mc_eval: false,
            mc_samples: 10,
            mask_zero: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr_after < self.lr_init) || self.lr_after < 0.0 {
            return Err(Error::Config(format!(
                "lr_after ({}) must be below lr_init ({})",
                self.lr_after, self.lr_init
            )));
        }
        if self.lr_drop_epoch == 0 || self.lr_drop_epoch > self.epochs {
            return Err(Error::Config(format!(
                "lr_drop_epoch {} outside 1..={}",
                self.lr_drop_epoch, self.epochs
            )));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        if self.mc_eval && self.mc_samples == 0 {
            return Err(Error::Config("mc_samples must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate for a 1-indexed epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.lr_drop_epoch {
            self.lr_init
        } else {
            self.lr_after
        }
    }

    pub fn eval_options(&self, epoch: usize) -> EvalOptions {
        EvalOptions {
            batch_size: self.batch_size,
            mc_samples: self.mc_eval.then_some(self.mc_samples),
            seed: mix(&[self.seed, epoch as u64]),
            mask_zero: self.mask_zero,
        }
    }
}

/// Mean absolute error over every element.
pub fn mae_loss(pred: ArrayView4<'_, f64>, target: ArrayView4<'_, f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!("prediction {:?} vs target {:?}", pred.dim(), target.dim())));
    }
    if pred.is_empty() {
        return Err(Error::Degenerate("empty batch".into()));
    }
    let mut sum = 0.0;
    for (&p, &t) in pred.iter().zip(target.iter()) {
        if !p.is_finite() || !t.is_finite() {
            return Err(Error::InvalidArgument("non-finite value in loss input".into()));
        }
        sum += (p - t).abs();
    }
    Ok(sum / pred.len() as f64)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Normalized MAE over every training element seen this epoch.
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
    pub val_mape: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    /// Norm of ∂L/∂(graph learnables) on the first optimizer step.
    pub first_graph_grad_norm: f64,
    /// Where the best-epoch checkpoint was written, once the caller saves it.
    pub best_checkpoint: Option<String>,
}

impl TrainReport {
    /// One JSON object per epoch.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut s = String::new();
        for e in &self.epochs {
            s.push_str(&serde_json::to_string(e)?);
            s.push('\n');
        }
        Ok(s)
    }

    /// Equality on everything except wall-clock times.
    pub fn same_results(&self, other: &TrainReport) -> bool {
        let strip = |r: &TrainReport| {
            let mut r = r.clone();
            r.epochs.iter_mut().for_each(|e| e.wall_time_s = 0.0);
            r
        };
        strip(self) == strip(other)
    }

    pub fn final_val_mae(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.val_mae)
    }
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Snapshot at the epoch with the lowest validation MAE.
    pub best: ForecastModel,
    /// Validation metrics of the best and the final model.
    pub best_val: MetricReport,
    pub final_val: MetricReport,
}

fn batch_grads(
    model: &ForecastModel,
    x: &ndarray::Array4<f64>,
    y: &ndarray::Array4<f64>,
    masks: &[Vec<Option<DropoutMask>>],
    scale: f64,
) -> Result<(f64, Grads)> {
    let base = model.graph.expected();
    let d_out = model.config.features_out;
    let b = x.dim().0;
    let starts: Vec<usize> = (0..b).step_by(GRAD_CHUNK).collect();
    let partial: Vec<(f64, Grads)> = starts
        .par_iter()
        .map(|&lo| {
            let mut acc = model.zero_grads();
            let mut loss = 0.0;
            for i in lo..(lo + GRAD_CHUNK).min(b) {
                let (pred, cache) = model.forward_sample(x.slice(s![i, .., .., ..]), &base, &masks[i])?;
                let target = y.slice(s![i, .., .., ..d_out]);
                let mut dout = Array3::zeros(pred.dim());
                ndarray::Zip::from(&mut dout).and(&pred).and(&target).for_each(|d, &p, &t| {
                    let e = p - t;
                    loss += e.abs();
                    *d = if e > 0.0 {
                        scale
                    } else if e < 0.0 {
                        -scale
                    } else {
                        0.0
                    };
                });
                acc.add_assign(&model.backward_sample(&cache, &base, &masks[i], dout.view()));
            }
            Ok((loss, acc))
        })
        .collect::<Result<_>>()?;
    let mut iter = partial.into_iter();
    let (mut loss, mut grads) = iter.next().expect("nonempty batch");
    for (l, g) in iter {
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss * scale, grads))
}

/// Trains `model` in place and returns the report with the best-validation snapshot.
/// The constant adjacency is never modified.
pub fn train(model: &mut ForecastModel, splits: &Splits, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if splits.train.is_empty() {
        return Err(Error::Degenerate("training split has no windows".into()));
    }
    if splits.val.is_empty() {
        return Err(Error::Degenerate("validation split has no windows".into()));
    }
    let scaler = splits.scaler.as_ref();
    let n_weights = model.weights.slices().len();
    let sizes: Vec<usize> = model.parameter_slices().iter().map(|s| s.len()).collect();
    let mut adam = Adam::new(&sizes);
    let per_sample = (model.config.num_nodes * model.config.horizon * model.config.features_out) as f64;
    let layers = model.config.layers();

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ForecastModel, MetricReport)> = None;
    let mut first_graph_grad_norm = 0.0;
    let mut last_val = None;
    let mut step = 0usize;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let lr = cfg.lr_at(epoch);
        let mut order = splits.train.all_indices();
        order.shuffle(&mut stream_rng(cfg.seed, stream::SHUFFLE, epoch as u64));
        let epoch_masks = match cfg.graph_sample_scope {
            GraphSampleScope::Epoch => Some(model.draw_masks(&mut stream_rng(cfg.seed, stream::EPOCH_GRAPH, epoch as u64))),
            GraphSampleScope::Batch => None,
        };
        let mut batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        if let Some(cap) = cfg.max_batches_per_epoch {
            batches.truncate(cap.max(1));
        }
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (bi, idx) in batches.iter().enumerate() {
            let x = splits.train.inputs(idx);
            let y = splits.train.targets(idx);
            let masks: Vec<Vec<Option<DropoutMask>>> = match &epoch_masks {
                Some(m) => vec![m.clone(); idx.len()],
                None => (0..idx.len())
                    .map(|j| {
                        let key = mix(&[epoch as u64, bi as u64, j as u64]);
                        model.draw_masks(&mut stream_rng(cfg.seed, stream::DROPOUT, key))
                    })
                    .collect(),
            };
            debug_assert!(masks.iter().all(|m| m.len() == layers));
            let scale = 1.0 / (idx.len() as f64 * per_sample);
            let (loss, mut grads) = batch_grads(model, &x, &y, &masks, scale)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: Some(bi),
                });
            }
            loss_sum += loss * idx.len() as f64;
            seen += idx.len();
            let mut gslices = grads.slices_mut();
            if step == 0 {
                first_graph_grad_norm = gslices[n_weights..]
                    .iter()
                    .flat_map(|s| s.iter())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
            }
            if !cfg.train_weights {
                gslices[..n_weights].iter_mut().for_each(|s| s.fill(0.0));
            }
            if !cfg.train_graph {
                gslices[n_weights..].iter_mut().for_each(|s| s.fill(0.0));
            }
            if let Some(c) = cfg.grad_clip {
                clip_global_norm(&mut gslices, c);
            }
            let gviews: Vec<&[f64]> = gslices.iter().map(|s| &**s).collect();
            let mut params = model.parameter_slices_mut();
            adam.step(&mut params, &gviews, lr);
            step += 1;
        }
        let train_loss = loss_sum / seen as f64;
        let val = evaluate(model, &splits.val, scaler, &cfg.eval_options(epoch))?.report;
        if !val.mae.is_finite() {
            return Err(Error::Divergence { epoch, batch: None });
        }
        records.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_mae: val.mae,
            val_rmse: val.rmse,
            val_mape: val.mape,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        if best.as_ref().is_none_or(|b| val.mae < b.1) {
            best = Some((epoch, val.mae, model.clone(), val.clone()));
        }
        last_val = Some(val);
    }
    let (best_epoch, best_val_mae, best_model, best_val) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        report: TrainReport {
            epochs: records,
            best_epoch,
            best_val_mae,
            first_graph_grad_norm,
            best_checkpoint: None,
        },
        best: best_model,
        best_val,
        final_val: last_val.expect("at least one epoch"),
    })
}

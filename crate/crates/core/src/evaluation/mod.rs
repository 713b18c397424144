//! Metrics, the seasonal baseline, model scoring over a split, ablations and dropout sweeps.

mod ablation;
mod historical;
mod metrics;

use ndarray::{s, Array4, Axis};

pub use ablation::{ablation_csv, run_ablation, sweep_csv, sweep_dropout, Ablation, AblationRow, SweepRow};
pub use historical::{weekly_season, HistoricalAverage};
pub use metrics::{metrics, HorizonMetrics, MetricReport};

use crate::backbone::{mc_predict, ForecastModel};
use crate::data::{Scaler, WindowedDataset};
use crate::error::{Error, Result};
use crate::rng::mix;

/// How predictions are produced when scoring a split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub batch_size: usize,
    /// Monte Carlo samples; `None` uses the deterministic expected graph.
    pub mc_samples: Option<usize>,
    pub seed: u64,
    pub mask_zero: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            batch_size: 64,
            mc_samples: None,
            seed: 0,
            mask_zero: true,
        }
    }
}

/// Normalized-space predictions (B×N×τ×D_out) for every window of `ds`.
pub fn predict_dataset(model: &ForecastModel, ds: &WindowedDataset, opts: &EvalOptions) -> Result<Array4<f64>> {
    if ds.is_empty() {
        return Err(Error::Degenerate(format!("{:?} split has no windows", ds.split)));
    }
    let c = &model.config;
    let mut out = Array4::zeros((ds.len(), c.num_nodes, c.horizon, c.features_out));
    let idx = ds.all_indices();
    for (b, chunk) in idx.chunks(opts.batch_size.max(1)).enumerate() {
        let x = ds.inputs(chunk);
        let y = match opts.mc_samples {
            Some(s) => mc_predict(model, x.view(), s, mix(&[opts.seed, b as u64]))?.mean,
            None => model.predict(x.view())?,
        };
        out.slice_mut(s![chunk[0]..chunk[0] + chunk.len(), .., .., ..]).assign(&y);
    }
    Ok(out)
}

/// Targets restricted to the first `features_out` features.
pub fn dataset_targets(ds: &WindowedDataset, features_out: usize) -> Array4<f64> {
    let t = ds.targets(&ds.all_indices());
    t.slice(s![.., .., .., ..features_out]).to_owned()
}

/// Undoes Z-scoring on the leading features of the last axis.
pub fn denormalize(x: &mut Array4<f64>, scaler: Option<&Scaler>) {
    let Some(sc) = scaler else { return };
    for (f, mut lane) in x.axis_iter_mut(Axis(3)).enumerate() {
        let (m, sd) = (sc.mean[f], sc.std[f]);
        lane.mapv_inplace(|v| v * sd + m);
    }
}

/// De-normalized predictions, targets and their metrics for one split.
pub struct Evaluation {
    pub report: MetricReport,
    pub prediction: Array4<f64>,
    pub target: Array4<f64>,
}

pub fn evaluate(model: &ForecastModel, ds: &WindowedDataset, scaler: Option<&Scaler>, opts: &EvalOptions) -> Result<Evaluation> {
    let mut prediction = predict_dataset(model, ds, opts)?;
    let mut target = dataset_targets(ds, model.config.features_out);
    denormalize(&mut prediction, scaler);
    denormalize(&mut target, scaler);
    let report = metrics(prediction.view(), target.view(), opts.mask_zero)?;
    Ok(Evaluation {
        report,
        prediction,
        target,
    })
}

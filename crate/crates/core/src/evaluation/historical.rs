use ndarray::{s, Array2, Array3, Array4, ArrayView3, Axis};

use crate::data::WindowedDataset;
use crate::error::{Error, Result};

/// Steps per week at the given sampling interval.
pub fn weekly_season(interval_minutes: u32) -> usize {
    (7 * 24 * 60 / interval_minutes.max(1)) as usize
}

/// Seasonal mean predictor: the forecast for step `t` is the training mean over all steps with
/// the same phase `t mod season`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalAverage {
    pub season: usize,
    /// season × N × D; rows of unseen phases hold the overall mean.
    phase_means: Array3<f64>,
    pub overall: Array2<f64>,
    /// Set when some phase had no training observation and fell back to the overall mean.
    pub fallback: bool,
}

impl HistoricalAverage {
    /// Fits on steps `0..train_end` of an N×T×D series.
    pub fn fit(series: ArrayView3<'_, f64>, train_end: usize, season: usize) -> Result<Self> {
        let (n, t, d) = series.dim();
        if season == 0 {
            return Err(Error::InvalidArgument("season length must be positive".into()));
        }
        if train_end == 0 || train_end > t {
            return Err(Error::Degenerate(format!("training span of {train_end} steps in a {t}-step series")));
        }
        let train = series.slice(s![.., ..train_end, ..]);
        let overall = train.mean_axis(Axis(1)).expect("nonempty");
        let mut sums = Array3::<f64>::zeros((season, n, d));
        let mut counts = vec![0usize; season];
        for step in 0..train_end {
            let p = step % season;
            counts[p] += 1;
            let mut dst = sums.index_axis_mut(Axis(0), p);
            dst += &train.index_axis(Axis(1), step);
        }
        let mut fallback = false;
        for (p, &c) in counts.iter().enumerate() {
            let mut row = sums.index_axis_mut(Axis(0), p);
            if c == 0 {
                fallback = true;
                row.assign(&overall);
            } else {
                row /= c as f64;
            }
        }
        Ok(HistoricalAverage {
            season,
            phase_means: sums,
            overall,
            fallback,
        })
    }

    /// N×D forecast for absolute step `t`.
    pub fn predict_at(&self, t: usize) -> ndarray::ArrayView2<'_, f64> {
        self.phase_means.index_axis(Axis(0), t % self.season)
    }

    /// N×|times|×D forecasts.
    pub fn predict(&self, times: &[usize]) -> Array3<f64> {
        let (_, n, d) = self.phase_means.dim();
        let mut out = Array3::zeros((n, times.len(), d));
        for (k, &t) in times.iter().enumerate() {
            out.slice_mut(s![.., k, ..]).assign(&self.predict_at(t));
        }
        out
    }

    /// B×N×τ×D forecasts for every window's target steps.
    pub fn forecast(&self, ds: &WindowedDataset) -> Array4<f64> {
        let (_, n, d) = self.phase_means.dim();
        let mut out = Array4::zeros((ds.len(), n, ds.horizon, d));
        for (b, &s0) in ds.starts().iter().enumerate() {
            let times: Vec<usize> = (s0 + ds.t_in..s0 + ds.t_in + ds.horizon).collect();
            out.index_axis_mut(Axis(0), b).assign(&self.predict(&times));
        }
        out
    }
}

use std::sync::Arc;

use ndarray::{s, Array3, Array4, ArrayView3};
use serde::{Deserialize, Serialize};

use super::{Scaler, TrafficTensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Relative sizes of the chronological train/val/test partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio {
            train: 6.0,
            val: 2.0,
            test: 2.0,
        }
    }
}

impl SplitRatio {
    /// All time steps in one (training) split.
    pub fn single() -> Self {
        SplitRatio {
            train: 1.0,
            val: 0.0,
            test: 0.0,
        }
    }

    /// Raw time indices `[train_end, val_end]` partitioning `0..total`.
    pub fn boundaries(&self, total: usize) -> Result<[usize; 2]> {
        let sum = self.train + self.val + self.test;
        if [self.train, self.val, self.test].iter().any(|r| *r < 0.0 || !r.is_finite()) || sum <= 0.0 {
            return Err(Error::InvalidArgument(format!("invalid split ratio {self:?}")));
        }
        let train_end = (total as f64 * self.train / sum).floor() as usize;
        let val_end = (total as f64 * (self.train + self.val) / sum).floor() as usize;
        Ok([train_end.min(total), val_end.min(total)])
    }

    pub fn train_fraction(&self) -> f64 {
        self.train / (self.train + self.val + self.test)
    }
}

/// Sliding windows (stride 1) over a shared N×T×D series. Windows are stored as start indices;
/// `inputs`/`targets` materialize B×N×T×D arrays on demand.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    series: Arc<Array3<f64>>,
    starts: Vec<usize>,
    pub t_in: usize,
    pub horizon: usize,
    pub split: Split,
}

impl WindowedDataset {
    pub fn new(series: Arc<Array3<f64>>, starts: Vec<usize>, t_in: usize, horizon: usize, split: Split) -> Self {
        WindowedDataset {
            series,
            starts,
            t_in,
            horizon,
            split,
        }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.series.dim().0
    }

    pub fn num_features(&self) -> usize {
        self.series.dim().2
    }

    /// First raw time index of each window's input.
    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn series(&self) -> &Arc<Array3<f64>> {
        &self.series
    }

    /// N×t_in×D input of window `i`.
    pub fn input(&self, i: usize) -> ArrayView3<'_, f64> {
        let s0 = self.starts[i];
        self.series.slice(s![.., s0..s0 + self.t_in, ..])
    }

    /// N×horizon×D target of window `i`.
    pub fn target(&self, i: usize) -> ArrayView3<'_, f64> {
        let s0 = self.starts[i] + self.t_in;
        self.series.slice(s![.., s0..s0 + self.horizon, ..])
    }

    /// B×N×t_in×D inputs for the selected windows.
    pub fn inputs(&self, idx: &[usize]) -> Array4<f64> {
        let (n, _, d) = self.series.dim();
        let mut out = Array4::zeros((idx.len(), n, self.t_in, d));
        for (b, &i) in idx.iter().enumerate() {
            out.slice_mut(s![b, .., .., ..]).assign(&self.input(i));
        }
        out
    }

    /// B×N×horizon×D targets for the selected windows.
    pub fn targets(&self, idx: &[usize]) -> Array4<f64> {
        let (n, _, d) = self.series.dim();
        let mut out = Array4::zeros((idx.len(), n, self.horizon, d));
        for (b, &i) in idx.iter().enumerate() {
            out.slice_mut(s![b, .., .., ..]).assign(&self.target(i));
        }
        out
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }
}

/// The three chronological splits plus the bookkeeping needed to undo normalization.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
    /// Raw time indices `[train_end, val_end]`.
    pub boundaries: [usize; 2],
    pub total_steps: usize,
    pub scaler: Option<Scaler>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &WindowedDataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

fn window_starts(lo: usize, hi: usize, span: usize) -> Vec<usize> {
    if hi < lo + span {
        return Vec::new();
    }
    (lo..=hi - span).collect()
}

/// Cuts the series into stride-1 windows. Split boundaries are fixed on raw time indices first;
/// a window belongs to a split only if its whole input and target lie inside it.
pub fn make_windows(data: &TrafficTensor, t_in: usize, horizon: usize, ratio: SplitRatio) -> Result<Splits> {
    if t_in == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("t_in and horizon must be positive".into()));
    }
    let total = data.num_steps();
    let span = t_in + horizon;
    if total < span {
        return Err(Error::Degenerate(format!(
            "series of {total} steps is shorter than one window ({t_in} + {horizon})"
        )));
    }
    let [train_end, val_end] = ratio.boundaries(total)?;
    let series = Arc::new(data.values.clone());
    let make = |lo, hi, split| WindowedDataset::new(series.clone(), window_starts(lo, hi, span), t_in, horizon, split);
    Ok(Splits {
        train: make(0, train_end, Split::Train),
        val: make(train_end, val_end, Split::Val),
        test: make(val_end, total, Split::Test),
        boundaries: [train_end, val_end],
        total_steps: total,
        scaler: data.scaler.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(n: usize, t: usize) -> TrafficTensor {
        let values = Array3::from_shape_fn((n, t, 1), |(i, j, _)| (i * 1000 + j) as f64);
        TrafficTensor::new(
            values,
            (0..n).map(|i| i.to_string()).collect(),
            (0..t).map(|i| i.to_string()).collect(),
            vec!["flow".into()],
        )
        .unwrap()
    }

    #[test]
    fn exactly_one_window() {
        let s = make_windows(&series(2, 24), 12, 12, SplitRatio::single()).unwrap();
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 1);
    }

    #[test]
    fn hundred_steps_single_split() {
        let s = make_windows(&series(2, 100), 12, 12, SplitRatio::single()).unwrap();
        assert_eq!(s.train.len(), 77);
        assert!(s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(make_windows(&series(2, 23), 12, 12, SplitRatio::single()).is_err());
    }

    #[test]
    fn window_contents_and_targets_follow_inputs() {
        let s = make_windows(&series(2, 40), 3, 2, SplitRatio::single()).unwrap();
        let x = s.train.inputs(&[5]);
        let y = s.train.targets(&[5]);
        assert_eq!(x.dim(), (1, 2, 3, 1));
        assert_eq!(y.dim(), (1, 2, 2, 1));
        assert_eq!(x[[0, 1, 0, 0]], 1005.0);
        assert_eq!(x[[0, 1, 2, 0]], 1007.0);
        assert_eq!(y[[0, 1, 0, 0]], 1008.0);
    }

    #[test]
    fn six_two_two_boundaries() {
        let s = make_windows(&series(1, 1000), 12, 12, SplitRatio::default()).unwrap();
        assert_eq!(s.boundaries, [600, 800]);
        assert_eq!(s.train.len(), 600 - 23);
        assert_eq!(s.val.len(), 200 - 23);
        assert_eq!(s.test.len(), 200 - 23);
        assert_eq!(*s.val.starts().first().unwrap(), 600);
        assert_eq!(*s.train.starts().last().unwrap() + 24, 600);
    }

    proptest! {
        #[test]
        fn window_count_formula(t_in in 1usize..20, horizon in 1usize..20, extra in 0usize..200) {
            let t = t_in + horizon + extra;
            let s = make_windows(&series(1, t), t_in, horizon, SplitRatio::single()).unwrap();
            prop_assert_eq!(s.train.len(), t - t_in - horizon + 1);
        }

        #[test]
        fn windows_never_straddle(t in 30usize..400, t_in in 1usize..8, horizon in 1usize..8) {
            let s = make_windows(&series(1, t), t_in, horizon, SplitRatio::default()).unwrap();
            let [a, b] = s.boundaries;
            for (lo, hi, ds) in [(0, a, &s.train), (a, b, &s.val), (b, t, &s.test)] {
                for &st in ds.starts() {
                    prop_assert!(st >= lo && st + t_in + horizon <= hi);
                }
                let expect = (hi - lo + 1).saturating_sub(t_in + horizon);
                prop_assert_eq!(ds.len(), expect);
            }
        }
    }
}

use ndarray::{Array3, ArrayViewMut, Axis, RemoveAxis};
use serde::{Deserialize, Serialize};

use super::TrafficTensor;
use crate::error::{Error, Result};

/// Per-feature Z-score statistics. `std` is the population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Fits on the first `train_steps` time steps of an N×T×D array.
    pub fn fit(values: &Array3<f64>, train_steps: usize, feature_names: &[String]) -> Result<Self> {
        let (_, t, d) = values.dim();
        if train_steps == 0 || train_steps > t {
            return Err(Error::InvalidArgument(format!(
                "training span of {train_steps} steps is outside 1..={t}"
            )));
        }
        let train = values.slice(ndarray::s![.., ..train_steps, ..]);
        let mut mean = Vec::with_capacity(d);
        let mut std = Vec::with_capacity(d);
        for f in 0..d {
            let col = train.index_axis(Axis(2), f);
            let count = col.len() as f64;
            let m = col.sum() / count;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / count;
            let s = var.sqrt();
            if !(s > 0.0 && s.is_finite()) {
                let name = feature_names.get(f).map(String::as_str).unwrap_or("?");
                return Err(Error::Degenerate(format!(
                    "feature '{name}' has zero variance over the training span"
                )));
            }
            mean.push(m);
            std.push(s);
        }
        Ok(Scaler { mean, std })
    }

    pub fn num_features(&self) -> usize {
        self.mean.len()
    }

    /// In-place `(x - mean) / std`; the last axis indexes features.
    pub fn transform_inplace<D: RemoveAxis>(&self, mut x: ArrayViewMut<'_, f64, D>) {
        let last = Axis(x.ndim() - 1);
        for (f, mut lane) in x.axis_iter_mut(last).enumerate() {
            let (m, s) = (self.mean[f], self.std[f]);
            lane.mapv_inplace(|v| (v - m) / s);
        }
    }

    /// In-place `x * std + mean`; the last axis indexes features.
    pub fn inverse_inplace<D: RemoveAxis>(&self, mut x: ArrayViewMut<'_, f64, D>) {
        let last = Axis(x.ndim() - 1);
        for (f, mut lane) in x.axis_iter_mut(last).enumerate() {
            let (m, s) = (self.mean[f], self.std[f]);
            lane.mapv_inplace(|v| v * s + m);
        }
    }
}

/// Z-score normalization with statistics from the leading `train_fraction` of the series.
pub fn zscore_fit_transform(raw: &TrafficTensor, train_fraction: f64) -> Result<TrafficTensor> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must lie in (0, 1], got {train_fraction}"
        )));
    }
    let t = raw.num_steps();
    let train_steps = ((t as f64 * train_fraction).floor() as usize).max(1).min(t);
    let scaler = Scaler::fit(&raw.values, train_steps, &raw.feature_names)?;
    let mut values = raw.values.clone();
    scaler.transform_inplace(values.view_mut());
    Ok(TrafficTensor {
        values,
        scaler: Some(scaler),
        ..raw.clone()
    })
}

impl TrafficTensor {
    /// Undoes normalization; errors if the tensor carries no scaler.
    pub fn inverse_transform(&self) -> Result<TrafficTensor> {
        let scaler = self
            .scaler
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("tensor is not normalized".into()))?;
        let mut values = self.values.clone();
        scaler.inverse_inplace(values.view_mut());
        Ok(TrafficTensor {
            values,
            scaler: None,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array3;

    fn tensor(values: Array3<f64>) -> TrafficTensor {
        let (n, t, d) = values.dim();
        TrafficTensor::new(
            values,
            (0..n).map(|i| i.to_string()).collect(),
            (0..t).map(|i| i.to_string()).collect(),
            (0..d).map(|i| format!("f{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn one_two_three() {
        let raw = tensor(Array3::from_shape_vec((1, 3, 1), vec![1.0, 2.0, 3.0]).unwrap());
        let z = zscore_fit_transform(&raw, 1.0).unwrap();
        let s = z.scaler.as_ref().unwrap();
        assert_abs_diff_eq!(s.mean[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.std[0], (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.std[0], 0.8165, epsilon = 1e-4);
        let v: Vec<f64> = z.values.iter().copied().collect();
        assert_abs_diff_eq!(v[0], -1.2247, epsilon = 1e-4);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[2], 1.2247, epsilon = 1e-4);
    }

    #[test]
    fn constant_feature_is_degenerate() {
        let raw = tensor(Array3::from_elem((2, 5, 1), 7.0));
        let err = zscore_fit_transform(&raw, 0.6).unwrap_err();
        assert!(err.to_string().contains("f0"), "{err}");
    }

    #[test]
    fn statistics_come_from_training_span_only() {
        let raw = tensor(Array3::from_shape_vec((1, 4, 1), vec![0.0, 2.0, 100.0, 200.0]).unwrap());
        let z = zscore_fit_transform(&raw, 0.5).unwrap();
        let s = z.scaler.unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.std[0], 1.0);
    }

    #[test]
    fn train_span_has_unit_moments() {
        let vals = Array3::from_shape_fn((3, 50, 2), |(n, t, d)| {
            ((n * 7 + t * 3 + d) as f64).sin() * (d as f64 + 1.0) + 4.0
        });
        let z = zscore_fit_transform(&tensor(vals), 0.6).unwrap();
        let train = z.values.slice(ndarray::s![.., ..30, ..]);
        for f in 0..2 {
            let col = train.index_axis(Axis(2), f);
            let m = col.mean().unwrap();
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(m.abs() < 1e-6);
            assert!((sd - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_fraction() {
        let raw = tensor(Array3::from_elem((1, 3, 1), 1.0));
        assert!(zscore_fit_transform(&raw, 0.0).is_err());
        assert!(zscore_fit_transform(&raw, 1.5).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip(data in proptest::collection::vec(-1e4f64..1e4, 24), frac in 0.3f64..1.0) {
                let raw = tensor(Array3::from_shape_vec((2, 6, 2), data).unwrap());
                let Ok(z) = zscore_fit_transform(&raw, frac) else { return Ok(()); };
                let back = z.inverse_transform().unwrap();
                for (a, b) in back.values.iter().zip(raw.values.iter()) {
                    prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
                }
            }
        }
    }
}

use std::fmt;

use ndarray::{ArrayView4, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Errors for one forecast step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Percent; `None` when every target at this step was masked.
    pub mape: Option<f64>,
    pub count: usize,
    /// Targets excluded from MAPE.
    pub masked: usize,
}

/// Per-horizon metrics and their averages over horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub horizons: Vec<HorizonMetrics>,
    pub mae: f64,
    pub rmse: f64,
    pub mape: Option<f64>,
    pub masked: usize,
}

fn fmt_mape(m: Option<f64>) -> String {
    m.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"))
}

impl MetricReport {
    /// `horizon  mae  rmse  mape  masked` rows, then an `avg` row.
    pub fn to_table(&self) -> String {
        let mut s = String::from("horizon\tmae\trmse\tmape_pct\tmasked\n");
        for (h, m) in self.horizons.iter().enumerate() {
            s.push_str(&format!(
                "{}\t{:.4}\t{:.4}\t{}\t{}\n",
                h + 1,
                m.mae,
                m.rmse,
                fmt_mape(m.mape),
                m.masked
            ));
        }
        s.push_str(&format!(
            "avg\t{:.4}\t{:.4}\t{}\t{}\n",
            self.mae,
            self.rmse,
            fmt_mape(self.mape),
            self.masked
        ));
        s
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MAE {:.4}  RMSE {:.4}  MAPE {}", self.mae, self.rmse, fmt_mape(self.mape))?;
        if self.mape.is_some() {
            write!(f, "%")?;
        }
        Ok(())
    }
}

/// MAE, RMSE and MAPE on de-normalized B×N×τ×D tensors, broken down along the horizon axis.
/// Zero targets are excluded from MAPE when `mask_zero` is set. Averages are the means of the
/// per-horizon values (MAPE over the horizons where it is defined).
pub fn metrics(pred: ArrayView4<'_, f64>, target: ArrayView4<'_, f64>, mask_zero: bool) -> Result<MetricReport> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!("prediction {:?} vs target {:?}", pred.dim(), target.dim())));
    }
    let horizon = pred.dim().2;
    if horizon == 0 || pred.is_empty() {
        return Err(Error::Degenerate("no values to score".into()));
    }
    let mut horizons = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let p = pred.index_axis(Axis(2), h);
        let t = target.index_axis(Axis(2), h);
        let (mut abs, mut sq, mut pct) = (0.0, 0.0, 0.0);
        let (mut count, mut masked) = (0usize, 0usize);
        for (&pv, &tv) in p.iter().zip(t.iter()) {
            let e = pv - tv;
            abs += e.abs();
            sq += e * e;
            count += 1;
            if mask_zero && tv == 0.0 {
                masked += 1;
            } else {
                pct += (e / tv).abs();
            }
        }
        let valid = count - masked;
        horizons.push(HorizonMetrics {
            mae: abs / count as f64,
            rmse: (sq / count as f64).sqrt(),
            mape: (valid > 0).then(|| pct / valid as f64 * 100.0),
            count,
            masked,
        });
    }
    let k = horizons.len() as f64;
    let defined: Vec<f64> = horizons.iter().filter_map(|m| m.mape).collect();
    Ok(MetricReport {
        mae: horizons.iter().map(|m| m.mae).sum::<f64>() / k,
        rmse: horizons.iter().map(|m| m.rmse).sum::<f64>() / k,
        mape: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        masked: horizons.iter().map(|m| m.masked).sum(),
        horizons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array4;
    use proptest::prelude::*;

    fn arr(v: &[f64]) -> Array4<f64> {
        Array4::from_shape_vec((1, v.len(), 1, 1), v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let t = arr(&[3.0, 4.0]);
        let r = metrics(t.view(), t.view(), true).unwrap();
        assert_eq!((r.mae, r.rmse, r.mape), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn single_element() {
        let r = metrics(arr(&[110.0]).view(), arr(&[100.0]).view(), true).unwrap();
        assert_abs_diff_eq!(r.mae, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rmse, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.mape.unwrap(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn rmse_exceeds_mae() {
        let r = metrics(arr(&[1.0, 3.0]).view(), arr(&[1.0, 1.0]).view(), true).unwrap();
        assert_abs_diff_eq!(r.mae, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rmse, 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn zero_targets_are_masked_from_mape() {
        let r = metrics(arr(&[1.0, 110.0]).view(), arr(&[0.0, 100.0]).view(), true).unwrap();
        assert_eq!(r.masked, 1);
        assert_abs_diff_eq!(r.mape.unwrap(), 10.0, epsilon = 1e-12);
        let all = metrics(arr(&[1.0]).view(), arr(&[0.0]).view(), true).unwrap();
        assert_eq!(all.mape, None);
        assert!(all.to_table().contains("undefined"));
    }

    #[test]
    fn average_is_mean_of_horizons() {
        let p = Array4::from_shape_vec((1, 1, 2, 1), vec![1.0, 5.0]).unwrap();
        let t = Array4::from_shape_vec((1, 1, 2, 1), vec![2.0, 2.0]).unwrap();
        let r = metrics(p.view(), t.view(), true).unwrap();
        assert_eq!(r.horizons.len(), 2);
        assert_abs_diff_eq!(r.mae, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.horizons[1].mape.unwrap(), 150.0, epsilon = 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        assert!(metrics(arr(&[1.0]).view(), arr(&[1.0, 2.0]).view(), true).is_err());
    }

    proptest! {
        #[test]
        fn rmse_at_least_mae(v in prop::collection::vec((-50.0f64..50.0, 1.0f64..50.0), 1..40)) {
            let p: Vec<f64> = v.iter().map(|x| x.0).collect();
            let t: Vec<f64> = v.iter().map(|x| x.1).collect();
            let r = metrics(arr(&p).view(), arr(&t).view(), true).unwrap();
            prop_assert!(r.rmse + 1e-12 >= r.mae);
        }

        #[test]
        fn node_permutation_invariant(v in prop::collection::vec((-50.0f64..50.0, 1.0f64..50.0), 2..20), shift in 1usize..19) {
            let p: Vec<f64> = v.iter().map(|x| x.0).collect();
            let t: Vec<f64> = v.iter().map(|x| x.1).collect();
            let k = shift % p.len();
            let mut pr = p.clone();
            let mut tr = t.clone();
            pr.rotate_left(k);
            tr.rotate_left(k);
            let a = metrics(arr(&p).view(), arr(&t).view(), true).unwrap();
            let b = metrics(arr(&pr).view(), arr(&tr).view(), true).unwrap();
            prop_assert!((a.mae - b.mae).abs() < 1e-9);
            prop_assert!((a.rmse - b.rmse).abs() < 1e-9);
        }
    }
}

use ndarray::Array2;

use super::DistanceMap;
use crate::error::{Error, Result};

/// Default kernel threshold.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Thresholded Gaussian kernel over road distances.
///
/// `A[i][j] = exp(-d_ij² / ξ²)` when `i != j` and the kernel value is at least `epsilon`,
/// otherwise 0. Pairs without a distance entry are unconnected; the map is directed, so a
/// missing reverse direction stays 0. `ξ` is the population standard deviation of every
/// finite off-diagonal distance and is returned alongside the matrix.
pub fn construct_observed_adjacency(
    distances: &DistanceMap,
    n: usize,
    epsilon: f64,
) -> Result<(Array2<f64>, f64)> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    let mut finite = Vec::with_capacity(distances.len());
    for (&(i, j), &d) in distances {
        if i >= n || j >= n {
            return Err(Error::InvalidArgument(format!(
                "distance entry ({i}, {j}) references a node outside 0..{n}"
            )));
        }
        if d < 0.0 || d.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "distance ({i}, {j}) = {d} is negative or NaN"
            )));
        }
        if i != j && d.is_finite() {
            finite.push(d);
        }
    }
    if finite.is_empty() {
        return Err(Error::Degenerate(
            "no finite off-diagonal distance to derive xi from".into(),
        ));
    }
    let xi = population_std(&finite);
    if xi == 0.0 {
        return Err(Error::Degenerate(
            "xi (std of distances) is zero: all distances identical".into(),
        ));
    }

    let mut adj = Array2::zeros((n, n));
    for (&(i, j), &d) in distances {
        if i == j || !d.is_finite() {
            continue;
        }
        let w = (-(d * d) / (xi * xi)).exp();
        if w >= epsilon {
            adj[[i, j]] = w;
        }
    }
    Ok((adj, xi))
}

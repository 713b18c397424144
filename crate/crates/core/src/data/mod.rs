//! Road-network ingestion: observed adjacency, Z-score normalization, windowing and file formats.

mod adjacency;
mod io;
mod manifest;
mod normalize;
mod window;

use std::collections::BTreeMap;

use ndarray::Array3;

pub use adjacency::{construct_observed_adjacency, population_std, DEFAULT_EPSILON};
pub use io::{
    load_distance_csv, load_matrix_csv, load_node_ids, load_traffic, load_traffic_bin, load_traffic_csv, write_matrix_csv,
    write_distance_csv, write_node_ids, write_traffic_bin, write_traffic_csv,
};
pub use manifest::Manifest;
pub use normalize::{zscore_fit_transform, Scaler};
pub use window::{make_windows, Split, SplitRatio, Splits, WindowedDataset};

use crate::error::{Error, Result};

/// Sparse directed distance map `(from, to) -> cost`.
pub type DistanceMap = BTreeMap<(usize, usize), f64>;

/// Observed road topology.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    pub node_ids: Vec<String>,
    pub distances: DistanceMap,
    /// Thresholded Gaussian-kernel weights, zero diagonal, possibly asymmetric.
    pub observed_adjacency: ndarray::Array2<f64>,
    /// Kernel bandwidth (population std of the finite off-diagonal distances).
    pub xi: f64,
    pub epsilon: f64,
}

impl RoadGraph {
    pub fn new(node_ids: Vec<String>, distances: DistanceMap, epsilon: f64) -> Result<Self> {
        let (observed_adjacency, xi) =
            construct_observed_adjacency(&distances, node_ids.len(), epsilon)?;
        Ok(RoadGraph {
            node_ids,
            distances,
            observed_adjacency,
            xi,
            epsilon,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    /// `max(A, Aᵀ)`, the undirected view of the observed adjacency.
    pub fn symmetrized(&self) -> ndarray::Array2<f64> {
        let a = &self.observed_adjacency;
        let mut s = a.clone();
        s.zip_mut_with(&a.t(), |x, &y| *x = x.max(y));
        s
    }
}

/// N roads × T steps × D features.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficTensor {
    pub values: Array3<f64>,
    pub interval_minutes: u32,
    pub feature_names: Vec<String>,
    pub node_ids: Vec<String>,
    pub timestamps: Vec<String>,
    /// Present once the values have been normalized.
    pub scaler: Option<Scaler>,
}

impl TrafficTensor {
    pub fn new(
        values: Array3<f64>,
        node_ids: Vec<String>,
        timestamps: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let (n, t, d) = values.dim();
        if node_ids.len() != n || timestamps.len() != t || feature_names.len() != d {
            return Err(Error::Shape(format!(
                "tensor is {n}x{t}x{d} but got {} node ids, {} timestamps, {} feature names",
                node_ids.len(),
                timestamps.len(),
                feature_names.len()
            )));
        }
        Ok(TrafficTensor {
            values,
            interval_minutes: 5,
            feature_names,
            node_ids,
            timestamps,
            scaler: None,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.values.dim().0
    }

    pub fn num_steps(&self) -> usize {
        self.values.dim().1
    }

    pub fn num_features(&self) -> usize {
        self.values.dim().2
    }

    /// Drops every time step that has a non-finite entry in any node or feature.
    /// Returns the cleaned tensor and the dropped (original) step indices.
    pub fn drop_missing(&self) -> (TrafficTensor, Vec<usize>) {
        let (n, t, d) = self.values.dim();
        let keep: Vec<usize> = (0..t)
            .filter(|&s| {
                self.values
                    .slice(ndarray::s![.., s, ..])
                    .iter()
                    .all(|v| v.is_finite())
            })
            .collect();
        let dropped: Vec<usize> = (0..t).filter(|s| keep.binary_search(s).is_err()).collect();
        let mut values = Array3::zeros((n, keep.len(), d));
        for (dst, &src) in keep.iter().enumerate() {
            values
                .slice_mut(ndarray::s![.., dst, ..])
                .assign(&self.values.slice(ndarray::s![.., src, ..]));
        }
        let cleaned = TrafficTensor {
            values,
            interval_minutes: self.interval_minutes,
            feature_names: self.feature_names.clone(),
            node_ids: self.node_ids.clone(),
            timestamps: keep.iter().map(|&s| self.timestamps[s].clone()).collect(),
            scaler: self.scaler.clone(),
        };
        (cleaned, dropped)
    }
}

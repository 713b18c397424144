//! Seeded road network with a known spatial operator:
//! `X_{t+1} = c·tanh((ρ·G·X_t + seasonal(t) + noise_t) / c)`, written out as `base_level + X`.
//!
//! `G` holds the observed (nearest-neighbour) road links, a few hidden links the road map does
//! not show, and a declared fraction of negative links. Its rows are scaled to unit absolute
//! sum, so `ρ < 1` keeps the recursion stable.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{write_distance_csv, write_matrix_csv, write_node_ids, write_traffic_csv, DistanceMap, TrafficTensor};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

pub const STEPS_PER_DAY: usize = 288;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_nodes: usize,
    pub days: usize,
    /// Used verbatim when given (`G[i, j]` is the pull of node j on node i); generated otherwise.
    pub ground_truth_graph: Option<Array2<f64>>,
    pub daily_amplitude: f64,
    pub noise_std: f64,
    pub negative_edge_fraction: f64,
    pub seed: u64,
    pub rho: f64,
    pub base_level: f64,
    pub burn_in_days: usize,
    /// Soft bound `c` on the deviation from `base_level`.
    pub saturation: f64,
    /// Road links per node (nearest neighbours by position).
    pub neighbors: usize,
    /// Unobserved links per node.
    pub hidden_edges: usize,
    /// Pairs up to this many road links apart get a distance record (shortest road path).
    pub distance_hops: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_nodes: 20,
            days: 14,
            ground_truth_graph: None,
            daily_amplitude: 20.0,
            noise_std: 4.0,
            negative_edge_fraction: 0.2,
            seed: 0,
            rho: 0.9,
            base_level: 200.0,
            burn_in_days: 3,
            saturation: 150.0,
            neighbors: 3,
            hidden_edges: 1,
            distance_hops: 2,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 || self.days == 0 {
            return Err(Error::InvalidArgument("need at least 2 nodes and 1 day".into()));
        }
        if !(0.0..1.0).contains(&self.negative_edge_fraction) {
            return Err(Error::InvalidArgument(format!(
                "negative_edge_fraction must lie in [0, 1), got {}",
                self.negative_edge_fraction
            )));
        }
        if self.noise_std < 0.0 || !(self.saturation > 0.0) || self.neighbors == 0 || self.neighbors >= self.n_nodes {
            return Err(Error::InvalidArgument("noise_std ≥ 0, saturation > 0, 1 ≤ neighbors < n_nodes required".into()));
        }
        if let Some(g) = &self.ground_truth_graph {
            if g.dim() != (self.n_nodes, self.n_nodes) || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("ground truth graph must be finite {0}x{0}", self.n_nodes)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub tensor: TrafficTensor,
    pub distances: DistanceMap,
    pub ground_truth: Array2<f64>,
    pub positions: Array2<f64>,
}

/// Spectral radius via the complex eigenvalues.
pub fn spectral_radius(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    dm.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn nearest<R: Rng>(pos: &Array2<f64>, k: usize, hops: usize, rng: &mut R) -> (BTreeSet<(usize, usize)>, DistanceMap) {
    let n = pos.nrows();
    let dist = |i: usize, j: usize| ((pos[[i, 0]] - pos[[j, 0]]).powi(2) + (pos[[i, 1]] - pos[[j, 1]]).powi(2)).sqrt();
    let mut links = BTreeSet::new();
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)));
        for &j in others.iter().take(k) {
            links.insert((i.min(j), i.max(j)));
        }
    }
    // Directed road lengths, then shortest paths with hop counts.
    let mut road = Array2::from_elem((n, n), f64::INFINITY);
    let mut hop = Array2::from_elem((n, n), usize::MAX);
    for i in 0..n {
        road[[i, i]] = 0.0;
        hop[[i, i]] = 0;
    }
    for &(i, j) in &links {
        let d = dist(i, j);
        road[[i, j]] = d * rng.random_range(1.0..1.2);
        road[[j, i]] = d * rng.random_range(1.0..1.2);
        hop[[i, j]] = 1;
        hop[[j, i]] = 1;
    }
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = road[[i, m]] + road[[m, j]];
                if via < road[[i, j]] {
                    road[[i, j]] = via;
                    hop[[i, j]] = hop[[i, m]].saturating_add(hop[[m, j]]);
                }
            }
        }
    }
    let mut distances = DistanceMap::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && hop[[i, j]] <= hops {
                distances.insert((i, j), road[[i, j]]);
            }
        }
    }
    (links, distances)
}

fn generate_graph<R: Rng>(spec: &SyntheticSpec, links: &BTreeSet<(usize, usize)>, rng: &mut R) -> Array2<f64> {
    let n = spec.n_nodes;
    let mut g = Array2::<f64>::zeros((n, n));
    for &(i, j) in links {
        g[[i, j]] = rng.random_range(0.3..1.0);
        g[[j, i]] = rng.random_range(0.3..1.0);
    }
    for i in 0..n {
        let mut candidates: Vec<usize> = (0..n).filter(|&j| j != i && g[[i, j]] == 0.0).collect();
        candidates.shuffle(rng);
        for &j in candidates.iter().take(spec.hidden_edges) {
            g[[i, j]] = rng.random_range(0.3..1.0);
        }
    }
    let mut edges: Vec<(usize, usize)> = g.indexed_iter().filter(|(_, &v)| v != 0.0).map(|(ix, _)| ix).collect();
    let k = (spec.negative_edge_fraction * edges.len() as f64).ceil() as usize;
    edges.shuffle(rng);
    for &(i, j) in edges.iter().take(k) {
        g[[i, j]] = -g[[i, j]];
    }
    for i in 0..n {
        g[[i, i]] = rng.random_range(0.5..1.0);
    }
    for mut row in g.rows_mut() {
        let s: f64 = row.iter().map(|v| v.abs()).sum();
        row /= s;
    }
    g
}

/// Generates the series, observed distances and the ground-truth operator.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let n = spec.n_nodes;
    let mut rng = stream_rng(spec.seed, stream::SYNTH, 0);
    let positions = Array2::from_shape_simple_fn((n, 2), || rng.random_range(0.0..10.0));
    let (links, distances) = nearest(&positions, spec.neighbors, spec.distance_hops.max(1), &mut rng);
    let g = match &spec.ground_truth_graph {
        Some(g) => g.clone(),
        None => generate_graph(spec, &links, &mut rng),
    };
    let radius = spectral_radius(&(&g * spec.rho));
    if radius >= 1.0 {
        return Err(Error::Unstable(radius));
    }
    let amp: Vec<f64> = (0..n).map(|_| spec.daily_amplitude * rng.random_range(0.5..1.5)).collect();
    let phase: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let drive = 1.0 - spec.rho;
    let seasonal = |i: usize, t: usize| {
        let w = std::f64::consts::TAU * (t % STEPS_PER_DAY) as f64 / STEPS_PER_DAY as f64;
        drive * amp[i] * ((w + phase[i]).sin() + 0.5 * (2.0 * w + 0.7 * phase[i]).sin())
    };

    let burn = spec.burn_in_days * STEPS_PER_DAY;
    let total = spec.days * STEPS_PER_DAY;
    let mut x = vec![0.0; n];
    let mut values = Array3::zeros((n, total, 1));
    let c = spec.saturation;
    for step in 0..burn + total {
        if step >= burn {
            for i in 0..n {
                values[[i, step - burn, 0]] = spec.base_level + x[i];
            }
        }
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut v = seasonal(i, step + 1);
            for j in 0..n {
                v += spec.rho * g[[i, j]] * x[j];
            }
            if spec.noise_std > 0.0 {
                v += noise.sample(&mut rng);
            }
            next[i] = c * (v / c).tanh();
        }
        x = next;
    }
    let node_ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let timestamps = (0..total)
        .map(|t| {
            let minutes = t * 5;
            format!("d{:03}-{:02}:{:02}", minutes / 1440, minutes / 60 % 24, minutes % 60)
        })
        .collect();
    let tensor = TrafficTensor::new(values, node_ids, timestamps, vec!["flow".into()])?;
    Ok(SyntheticDataset {
        spec: spec.clone(),
        tensor,
        distances,
        ground_truth: g,
        positions,
    })
}

impl SyntheticDataset {
    /// Writes `traffic.csv`, `distances.csv`, `node_ids.txt`, `ground_truth.csv` and `synth.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_traffic_csv(&dir.join("traffic.csv"), &self.tensor, 0)?;
        write_distance_csv(&dir.join("distances.csv"), &self.distances)?;
        write_node_ids(&dir.join("node_ids.txt"), &self.tensor.node_ids)?;
        write_matrix_csv(&dir.join("ground_truth.csv"), &self.ground_truth)?;
        let p = dir.join("synth.json");
        fs::write(&p, serde_json::to_string_pretty(&self.spec)?).map_err(|e| Error::io(&p, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::HistoricalAverage;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            n_nodes: 8,
            days: 9,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn length_and_negative_edges() {
        let d = generate(&small()).unwrap();
        assert_eq!(d.tensor.num_steps(), 9 * STEPS_PER_DAY);
        assert!(d.ground_truth.iter().any(|&v| v < 0.0));
        assert!(d.tensor.values.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn noiseless_series_is_daily_periodic() {
        let spec = SyntheticSpec {
            noise_std: 0.0,
            burn_in_days: 10,
            ..small()
        };
        let d = generate(&spec).unwrap();
        let series = d.tensor.values.view();
        let train_end = 8 * STEPS_PER_DAY;
        let ha = HistoricalAverage::fit(series, train_end, 7 * STEPS_PER_DAY).unwrap();
        let times: Vec<usize> = (train_end..9 * STEPS_PER_DAY).collect();
        let pred = ha.predict(&times);
        let truth = series.slice(ndarray::s![.., train_end.., ..]);
        let mae = (&pred - &truth).mapv(f64::abs).mean().unwrap();
        assert!(mae < 1e-9, "HA test MAE {mae}");
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let d = generate(&small()).unwrap();
        d.write_to(a.path()).unwrap();
        generate(&small()).unwrap().write_to(b.path()).unwrap();
        for f in ["traffic.csv", "distances.csv", "node_ids.txt", "ground_truth.csv", "synth.json"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn unstable_operator_rejected() {
        let spec = SyntheticSpec {
            n_nodes: 3,
            neighbors: 1,
            rho: 1.0,
            ground_truth_graph: Some(Array2::eye(3) * 1.5),
            ..SyntheticSpec::default()
        };
        assert!(matches!(generate(&spec), Err(Error::Unstable(r)) if (r - 1.5).abs() < 1e-9));
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let m = ndarray::array![[0.0, -2.0], [2.0, 0.0]];
        assert!((spectral_radius(&m) - 2.0).abs() < 1e-12);
    }
}

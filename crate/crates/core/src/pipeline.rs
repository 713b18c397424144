//! End-to-end assembly: raw series and distances → prepared splits → constant graph → model.

use ndarray::Array2;

use crate::backbone::{ForecastModel, GraphModule};
use crate::bgcn::{AdaptiveAdjacency, BayesianGraph};
use crate::config::{Config, GraphKind};
use crate::data::{make_windows, DistanceMap, Manifest, RoadGraph, Scaler, Splits, TrafficTensor};
use crate::error::{Error, Result};
use crate::gvae::{gvae_train, pairwise_sq_distances, DistanceMatrix, NodeEmbeddings};
use crate::map_graph::{normalize_adjacency, solve_map_graph, MapGraph};
use crate::rng::{stream, stream_rng};

/// Cleaned, normalized and windowed data with its road graph.
pub struct Prepared {
    pub road: RoadGraph,
    /// Raw values after dropping steps with missing entries.
    pub cleaned: TrafficTensor,
    pub normalized: TrafficTensor,
    pub splits: Splits,
    pub manifest: Manifest,
}

/// Drops incomplete steps, fits the Z-score on the training span, and cuts windows.
pub fn prepare(node_ids: Vec<String>, distances: DistanceMap, raw: &TrafficTensor, cfg: &Config) -> Result<Prepared> {
    if node_ids.len() != raw.num_nodes() {
        return Err(Error::Shape(format!(
            "{} node ids but the series has {} nodes",
            node_ids.len(),
            raw.num_nodes()
        )));
    }
    let road = RoadGraph::new(node_ids, distances, cfg.epsilon)?;
    let (cleaned, dropped) = raw.drop_missing();
    let [train_end, _] = cfg.split.boundaries(cleaned.num_steps())?;
    if train_end == 0 {
        return Err(Error::Degenerate("training span is empty".into()));
    }
    let scaler = Scaler::fit(&cleaned.values, train_end, &cleaned.feature_names)?;
    let mut values = cleaned.values.clone();
    scaler.transform_inplace(values.view_mut());
    let normalized = TrafficTensor {
        values,
        scaler: Some(scaler.clone()),
        ..cleaned.clone()
    };
    let splits = make_windows(&normalized, cfg.t_in, cfg.horizon, cfg.split)?;
    let manifest = Manifest {
        node_ids: road.node_ids.clone(),
        feature_names: cleaned.feature_names.clone(),
        interval_minutes: cleaned.interval_minutes,
        xi: road.xi,
        epsilon: road.epsilon,
        total_steps: cleaned.num_steps(),
        dropped_timestamps: dropped.iter().map(|&s| raw.timestamps[s].clone()).collect(),
        dropped_steps: dropped,
        split_boundaries: splits.boundaries,
        split_sizes: [splits.train.len(), splits.val.len(), splits.test.len()],
        t_in: cfg.t_in,
        horizon: cfg.horizon,
        scaler,
        seed: cfg.seed,
    };
    Ok(Prepared {
        road,
        cleaned,
        normalized,
        splits,
        manifest,
    })
}

/// The offline graph: embeddings, their distance matrix, the MAP adjacency and its normalization.
pub struct ConstantGraph {
    pub embeddings: NodeEmbeddings,
    pub z: DistanceMatrix,
    pub map: MapGraph,
    pub a_const: Array2<f64>,
}

pub fn learn_constant_graph(road: &RoadGraph, cfg: &Config) -> Result<ConstantGraph> {
    let embeddings = gvae_train(road, &cfg.gvae)?;
    graph_from_embeddings(embeddings, cfg)
}

pub fn graph_from_embeddings(embeddings: NodeEmbeddings, cfg: &Config) -> Result<ConstantGraph> {
    let z = pairwise_sq_distances(&embeddings)?;
    let map = solve_map_graph(&z, &cfg.map)?;
    let a_const = normalize_adjacency(map.adjacency.view(), cfg.adjacency_norm);
    Ok(ConstantGraph {
        embeddings,
        z,
        map,
        a_const,
    })
}

/// A freshly initialized network around `a_const` (ignored by the adaptive variant).
pub fn build_model(cfg: &Config, a_const: &Array2<f64>, features_in: usize) -> Result<ForecastModel> {
    let n = a_const.nrows();
    let graph = match cfg.graph_kind {
        GraphKind::Bayesian => GraphModule::Bayesian(BayesianGraph::new(a_const.clone(), cfg.dropout_rate, cfg.seed)?),
        GraphKind::Adaptive => {
            let mut rng = stream_rng(cfg.seed, stream::INIT, 1);
            GraphModule::Adaptive(AdaptiveAdjacency::new(n, cfg.adaptive_dim, &mut rng))
        }
    };
    let mut model = ForecastModel::new(cfg.backbone(n, features_in), graph, cfg.seed)?;
    model.skip_source = cfg.skip_source;
    Ok(model)
}

//! Traffic forecasting with a Bayesian graph convolution.
//!
//! The spatial operator used by every graph-convolution layer is `Dropout(Ã + φ)`:
//! `Ã` is a constant, self-loop-normalized adjacency learned offline from road topology
//! (graph VAE embeddings → log-barrier graph learning), `φ` is a free N×N matrix trained
//! jointly with the network, and the dropout mask is resampled per forward pass so repeated
//! passes form a Monte Carlo estimate of the predictive distribution.
//!
//! Module map:
//!
//! - [`data`]: distance/traffic ingestion, observed adjacency, Z-score, windowing
//! - [`gvae`]: graph variational auto-encoder node embeddings and their distance matrix
//! - [`map_graph`]: the symmetric MAP adjacency solver and adjacency normalization
//! - [`bgcn`]: the Bayesian graph, its sampler, the graph convolution and the attention baseline
//! - [`backbone`]: gated dilated temporal convolutions + graph convolutions, with backprop
//! - [`training`]: MAE objective, Adam, learning-rate schedule, the epoch loop
//! - [`evaluation`]: metrics, historical average, ablations and dropout sweeps
//! - [`synthetic`]: seeded road-network generator with a known spatial operator

pub mod backbone;
pub mod bgcn;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gvae;
pub mod linalg;
pub mod map_graph;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod synthetic;
pub mod training;

pub use backbone::{BackboneConfig, ForecastModel, GraphModule};
pub use bgcn::{AdaptiveAdjacency, BayesianGraph};
pub use data::{RoadGraph, TrafficTensor, WindowedDataset};
pub use error::{Error, Result};
pub use evaluation::MetricReport;
pub use gvae::{DistanceMatrix, NodeEmbeddings};
pub use map_graph::{MapGraph, MapGraphConfig};
pub use training::{TrainConfig, TrainReport};
pub use config::Config;

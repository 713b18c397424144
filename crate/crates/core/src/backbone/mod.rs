//! Stacked spatial-temporal layers (gated dilated TCN → graph convolution → residual) with
//! skip connections into a two-layer output head that emits every horizon at once.

mod checkpoint;
mod config;
pub mod layers;
mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::{count_backbone_weights, count_parameters, BackboneConfig};
pub use model::{mc_predict, ForecastModel, ForwardCache, GraphModule, Grads, LayerWeights, McPrediction, SkipSource, Weights};

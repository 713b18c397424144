//! Flat `key = value` run configuration covering data, graph learning, network and training
//! settings. Unknown keys are rejected; every key can be overridden with `BGCN_<KEY>`.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneConfig, SkipSource};
use crate::bgcn::{GraphSampleScope, DEFAULT_DROPOUT};
use crate::data::{SplitRatio, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::gvae::GvaeConfig;
use crate::map_graph::{AdjacencyNorm, MapGraphConfig, StepRule};
use crate::synthetic::SyntheticSpec;
use crate::training::TrainConfig;

pub const ENV_PREFIX: &str = "BGCN_";

/// Which spatial operator the network uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Bayesian,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub seed: u64,
    pub t_in: usize,
    pub horizon: usize,
    pub split: SplitRatio,
    pub epsilon: f64,
    pub gvae: GvaeConfig,
    pub map: MapGraphConfig,
    pub adjacency_norm: AdjacencyNorm,
    pub graph_kind: GraphKind,
    pub dropout_rate: f64,
    pub adaptive_dim: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub end_channels: usize,
    pub features_out: usize,
    pub skip_source: SkipSource,
    pub train: TrainConfig,
    pub sweep_rates: Vec<f64>,
    pub synth: SyntheticSpec,
}

impl Default for Config {
    fn default() -> Self {
        let b = BackboneConfig::new(1);
        Config {
            seed: 0,
            t_in: b.t_in,
            horizon: b.horizon,
            split: SplitRatio::default(),
            epsilon: DEFAULT_EPSILON,
            gvae: GvaeConfig::default(),
            map: MapGraphConfig::default(),
            adjacency_norm: AdjacencyNorm::Symmetric,
            graph_kind: GraphKind::Bayesian,
            dropout_rate: DEFAULT_DROPOUT,
            adaptive_dim: 10,
            kernel_size: b.kernel_size,
            dilations: b.dilations,
            residual_channels: b.residual_channels,
            skip_channels: b.skip_channels,
            end_channels: b.end_channels,
            features_out: b.features_out,
            skip_source: SkipSource::Tcn,
            train: TrainConfig::default(),
            sweep_rates: vec![0.0, 0.1, 0.3, 0.5, 0.7],
            synth: SyntheticSpec::default(),
        }
    }
}

/// Every recognised key, in file order.
pub const KEYS: &[&str] = &[
    "seed",
    "t_in",
    "horizon",
    "split_train",
    "split_val",
    "split_test",
    "epsilon",
    "gvae_hidden",
    "gvae_dim",
    "gvae_epochs",
    "gvae_lr",
    "map_alpha",
    "map_beta",
    "map_max_iters",
    "map_tol",
    "map_step_rule",
    "map_step_size",
    "map_normalize_z",
    "adjacency_norm",
    "graph_kind",
    "dropout_rate",
    "adaptive_dim",
    "kernel_size",
    "dilations",
    "residual_channels",
    "skip_channels",
    "end_channels",
    "features_out",
    "skip_source",
    "epochs",
    "batch_size",
    "lr_init",
    "lr_drop_epoch",
    "lr_after",
    "grad_clip",
    "graph_sample_scope",
    "train_graph",
    "train_weights",
    "max_batches_per_epoch",
    "mc_eval",
    "mc_samples",
    "mask_zero",
    "sweep_rates",
    "synth_nodes",
    "synth_days",
    "synth_amplitude",
    "synth_noise_std",
    "synth_negative_fraction",
    "synth_rho",
    "synth_base_level",
    "synth_burn_in_days",
    "synth_saturation",
    "synth_neighbors",
    "synth_hidden_edges",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got '{v}'"))),
    }
}

fn optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v == "none" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(key, s.trim())).collect()
}

fn choice<T: Copy>(key: &str, v: &str, options: &[(&str, T)]) -> Result<T> {
    options.iter().find(|(n, _)| *n == v).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("{key}: '{v}' is not one of {}", names.join("|")))
    })
}

fn show_list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn show_opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

const STEP_RULES: &[(&str, StepRule)] = &[("fixed", StepRule::Fixed), ("backtracking", StepRule::Backtracking)];
const NORMS: &[(&str, AdjacencyNorm)] = &[("symmetric", AdjacencyNorm::Symmetric), ("row", AdjacencyNorm::Row)];
const KINDS: &[(&str, GraphKind)] = &[("bayesian", GraphKind::Bayesian), ("adaptive", GraphKind::Adaptive)];
const SKIPS: &[(&str, SkipSource)] = &[("tcn", SkipSource::Tcn), ("graph", SkipSource::Graph)];
const SCOPES: &[(&str, GraphSampleScope)] = &[("batch", GraphSampleScope::Batch), ("epoch", GraphSampleScope::Epoch)];

fn name_of<T: PartialEq + Copy>(options: &[(&'static str, T)], v: T) -> String {
    options.iter().find(|(_, t)| *t == v).map(|(n, _)| n.to_string()).unwrap_or_default()
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => {
                self.seed = num(key, v)?;
                self.train.seed = self.seed;
                self.gvae.seed = self.seed;
                self.synth.seed = self.seed;
            }
            "t_in" => self.t_in = num(key, v)?,
            "horizon" => self.horizon = num(key, v)?,
            "split_train" => self.split.train = num(key, v)?,
            "split_val" => self.split.val = num(key, v)?,
            "split_test" => self.split.test = num(key, v)?,
            "epsilon" => self.epsilon = num(key, v)?,
            "gvae_hidden" => self.gvae.hidden = num(key, v)?,
            "gvae_dim" => self.gvae.dim = num(key, v)?,
            "gvae_epochs" => self.gvae.epochs = num(key, v)?,
            "gvae_lr" => self.gvae.lr = num(key, v)?,
            "map_alpha" => self.map.alpha = num(key, v)?,
            "map_beta" => self.map.beta = num(key, v)?,
            "map_max_iters" => self.map.max_iters = num(key, v)?,
            "map_tol" => self.map.tol = num(key, v)?,
            "map_step_rule" => self.map.step_rule = choice(key, v, STEP_RULES)?,
            "map_step_size" => self.map.step_size = num(key, v)?,
            "map_normalize_z" => self.map.normalize_z = flag(key, v)?,
            "adjacency_norm" => self.adjacency_norm = choice(key, v, NORMS)?,
            "graph_kind" => self.graph_kind = choice(key, v, KINDS)?,
            "dropout_rate" => self.dropout_rate = num(key, v)?,
            "adaptive_dim" => self.adaptive_dim = num(key, v)?,
            "kernel_size" => self.kernel_size = num(key, v)?,
            "dilations" => self.dilations = list(key, v)?,
            "residual_channels" => self.residual_channels = num(key, v)?,
            "skip_channels" => self.skip_channels = num(key, v)?,
            "end_channels" => self.end_channels = num(key, v)?,
            "features_out" => self.features_out = num(key, v)?,
            "skip_source" => self.skip_source = choice(key, v, SKIPS)?,
            "epochs" => self.train.epochs = num(key, v)?,
            "batch_size" => self.train.batch_size = num(key, v)?,
            "lr_init" => self.train.lr_init = num(key, v)?,
            "lr_drop_epoch" => self.train.lr_drop_epoch = num(key, v)?,
            "lr_after" => self.train.lr_after = num(key, v)?,
            "grad_clip" => self.train.grad_clip = optional(key, v)?,
            "graph_sample_scope" => self.train.graph_sample_scope = choice(key, v, SCOPES)?,
            "train_graph" => self.train.train_graph = flag(key, v)?,
            "train_weights" => self.train.train_weights = flag(key, v)?,
            "max_batches_per_epoch" => self.train.max_batches_per_epoch = optional(key, v)?,
            "mc_eval" => self.train.mc_eval = flag(key, v)?,
            "mc_samples" => self.train.mc_samples = num(key, v)?,
            "mask_zero" => self.train.mask_zero = flag(key, v)?,
            "sweep_rates" => self.sweep_rates = list(key, v)?,
            "synth_nodes" => self.synth.n_nodes = num(key, v)?,
            "synth_days" => self.synth.days = num(key, v)?,
            "synth_amplitude" => self.synth.daily_amplitude = num(key, v)?,
            "synth_noise_std" => self.synth.noise_std = num(key, v)?,
            "synth_negative_fraction" => self.synth.negative_edge_fraction = num(key, v)?,
            "synth_rho" => self.synth.rho = num(key, v)?,
            "synth_base_level" => self.synth.base_level = num(key, v)?,
            "synth_burn_in_days" => self.synth.burn_in_days = num(key, v)?,
            "synth_saturation" => self.synth.saturation = num(key, v)?,
            "synth_neighbors" => self.synth.neighbors = num(key, v)?,
            "synth_hidden_edges" => self.synth.hidden_edges = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let s = &self.synth;
        Some(match key {
            "seed" => self.seed.to_string(),
            "t_in" => self.t_in.to_string(),
            "horizon" => self.horizon.to_string(),
            "split_train" => self.split.train.to_string(),
            "split_val" => self.split.val.to_string(),
            "split_test" => self.split.test.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "gvae_hidden" => self.gvae.hidden.to_string(),
            "gvae_dim" => self.gvae.dim.to_string(),
            "gvae_epochs" => self.gvae.epochs.to_string(),
            "gvae_lr" => self.gvae.lr.to_string(),
            "map_alpha" => self.map.alpha.to_string(),
            "map_beta" => self.map.beta.to_string(),
            "map_max_iters" => self.map.max_iters.to_string(),
            "map_tol" => self.map.tol.to_string(),
            "map_step_rule" => name_of(STEP_RULES, self.map.step_rule),
            "map_step_size" => self.map.step_size.to_string(),
            "map_normalize_z" => self.map.normalize_z.to_string(),
            "adjacency_norm" => name_of(NORMS, self.adjacency_norm),
            "graph_kind" => name_of(KINDS, self.graph_kind),
            "dropout_rate" => self.dropout_rate.to_string(),
            "adaptive_dim" => self.adaptive_dim.to_string(),
            "kernel_size" => self.kernel_size.to_string(),
            "dilations" => show_list(&self.dilations),
            "residual_channels" => self.residual_channels.to_string(),
            "skip_channels" => self.skip_channels.to_string(),
            "end_channels" => self.end_channels.to_string(),
            "features_out" => self.features_out.to_string(),
            "skip_source" => name_of(SKIPS, self.skip_source),
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "lr_init" => t.lr_init.to_string(),
            "lr_drop_epoch" => t.lr_drop_epoch.to_string(),
            "lr_after" => t.lr_after.to_string(),
            "grad_clip" => show_opt(&t.grad_clip),
            "graph_sample_scope" => name_of(SCOPES, t.graph_sample_scope),
            "train_graph" => t.train_graph.to_string(),
            "train_weights" => t.train_weights.to_string(),
            "max_batches_per_epoch" => show_opt(&t.max_batches_per_epoch),
            "mc_eval" => t.mc_eval.to_string(),
            "mc_samples" => t.mc_samples.to_string(),
            "mask_zero" => t.mask_zero.to_string(),
            "sweep_rates" => show_list(&self.sweep_rates),
            "synth_nodes" => s.n_nodes.to_string(),
            "synth_days" => s.days.to_string(),
            "synth_amplitude" => s.daily_amplitude.to_string(),
            "synth_noise_std" => s.noise_std.to_string(),
            "synth_negative_fraction" => s.negative_edge_fraction.to_string(),
            "synth_rho" => s.rho.to_string(),
            "synth_base_level" => s.base_level.to_string(),
            "synth_burn_in_days" => s.burn_in_days.to_string(),
            "synth_saturation" => s.saturation.to_string(),
            "synth_neighbors" => s.neighbors.to_string(),
            "synth_hidden_edges" => s.hidden_edges.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn merge_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{}:{}: expected key = value", origin.display(), idx + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("{}:{}: {e}", origin.display(), idx + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Config::default();
        c.merge_text(text, Path::new("<text>"))?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Config::default();
        c.merge_text(&text, path)?;
        Ok(c)
    }

    /// Applies `BGCN_<KEY>` overrides (key upper-cased) from `vars`. Other variables with the
    /// prefix are rejected.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_ascii_lowercase(), v)))
            .collect();
        found.sort();
        for (k, v) in found {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key '{k}' in environment variable {ENV_PREFIX}{}", k.to_ascii_uppercase())));
            }
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Every key with its current value, one per line.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn backbone(&self, num_nodes: usize, features_in: usize) -> BackboneConfig {
        BackboneConfig {
            num_nodes,
            t_in: self.t_in,
            horizon: self.horizon,
            features_in,
            features_out: self.features_out,
            kernel_size: self.kernel_size,
            dilations: self.dilations.clone(),
            residual_channels: self.residual_channels,
            skip_channels: self.skip_channels,
            end_channels: self.end_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.map.validate()?;
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate)));
        }
        if let Some(r) = self.sweep_rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::Config(format!("sweep rate {r} outside [0, 1)")));
        }
        self.split.boundaries(100)?;
        Ok(())
    }
}

use std::borrow::Cow;

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView3, ArrayView4, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::BackboneConfig;
use super::layers::{graph_conv_seq, graph_conv_seq_backward, pointwise, pointwise_backward, DilatedConv, GatedCache, GatedTcn};
use crate::bgcn::{AdaptiveAdjacency, BayesianGraph, DropoutMask};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

/// Where each layer's skip connection taps its features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipSource {
    /// Gated TCN output, before the graph convolution (Graph WaveNet layout).
    #[default]
    Tcn,
    /// Graph convolution output, before the residual add.
    Graph,
}

/// Spatial operator shared by every layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GraphModule {
    Bayesian(BayesianGraph),
    Adaptive(AdaptiveAdjacency),
}

impl GraphModule {
    pub fn num_nodes(&self) -> usize {
        match self {
            GraphModule::Bayesian(b) => b.num_nodes(),
            GraphModule::Adaptive(a) => a.e1.nrows(),
        }
    }

    /// The graph used when no dropout is applied.
    pub fn expected(&self) -> Array2<f64> {
        match self {
            GraphModule::Bayesian(b) => b.combined(),
            GraphModule::Adaptive(a) => a.adjacency(),
        }
    }

    pub fn as_bayesian(&self) -> Option<&BayesianGraph> {
        match self {
            GraphModule::Bayesian(b) => Some(b),
            GraphModule::Adaptive(_) => None,
        }
    }

    pub fn as_bayesian_mut(&mut self) -> Option<&mut BayesianGraph> {
        match self {
            GraphModule::Bayesian(b) => Some(b),
            GraphModule::Adaptive(_) => None,
        }
    }

    pub fn dropout_rate(&self) -> f64 {
        self.as_bayesian().map_or(0.0, |b| b.dropout_rate)
    }

    fn slices(&self) -> Vec<&[f64]> {
        match self {
            GraphModule::Bayesian(b) => vec![b.phi.as_slice().unwrap()],
            GraphModule::Adaptive(a) => vec![a.e1.as_slice().unwrap(), a.e2.as_slice().unwrap()],
        }
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            GraphModule::Bayesian(b) => vec![b.phi.as_slice_mut().unwrap()],
            GraphModule::Adaptive(a) => vec![a.e1.as_slice_mut().unwrap(), a.e2.as_slice_mut().unwrap()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub tcn: GatedTcn,
    pub skip_w: Array2<f64>,
    pub skip_b: Array1<f64>,
    pub gcn_w: Array2<f64>,
    pub gcn_b: Array1<f64>,
}

/// Every learnable tensor outside the graph module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub start_w: Array2<f64>,
    pub start_b: Array1<f64>,
    pub layers: Vec<LayerWeights>,
    pub end1_w: Array2<f64>,
    pub end1_b: Array1<f64>,
    pub end2_w: Array2<f64>,
    pub end2_b: Array1<f64>,
}

fn fan_in_uniform<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> ndarray::ArrayD<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    ndarray::ArrayD::from_shape_simple_fn(ndarray::IxDyn(shape), || rng.random_range(-bound..bound))
}

fn mat<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    fan_in_uniform(rng, &[rows, cols], fan_in).into_dimensionality().unwrap()
}

fn vecu<R: Rng>(rng: &mut R, len: usize, fan_in: usize) -> Array1<f64> {
    fan_in_uniform(rng, &[len], fan_in).into_dimensionality().unwrap()
}

impl Weights {
    /// Uniform `±1/√fan_in` initialization for every weight and bias.
    pub fn init<R: Rng>(c: &BackboneConfig, rng: &mut R) -> Self {
        let (r, sk, e, k) = (c.residual_channels, c.skip_channels, c.end_channels, c.kernel_size);
        let out = c.horizon * c.features_out;
        let start_w = mat(rng, c.features_in, r, c.features_in);
        let start_b = vecu(rng, r, c.features_in);
        let conv = |rng: &mut R, d| DilatedConv {
            w: fan_in_uniform(rng, &[k, r, r], k * r).into_dimensionality().unwrap(),
            b: vecu(rng, r, k * r),
            dilation: d,
        };
        let layers = c
            .dilations
            .iter()
            .map(|&d| {
                let filter = conv(rng, d);
                let gate = conv(rng, d);
                LayerWeights {
                    tcn: GatedTcn { filter, gate },
                    skip_w: mat(rng, r, sk, r),
                    skip_b: vecu(rng, sk, r),
                    gcn_w: mat(rng, r, r, r),
                    gcn_b: vecu(rng, r, r),
                }
            })
            .collect();
        Weights {
            start_w,
            start_b,
            layers,
            end1_w: mat(rng, sk, e, sk),
            end1_b: vecu(rng, e, sk),
            end2_w: mat(rng, e, out, e),
            end2_b: vecu(rng, out, e),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.fill(0.0);
        }
        z
    }

    /// Flat views in a fixed order (matches [`Weights::names`]).
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.start_w.as_slice().unwrap(), self.start_b.as_slice().unwrap()];
        for l in &self.layers {
            v.extend([
                l.tcn.filter.w.as_slice().unwrap(),
                l.tcn.filter.b.as_slice().unwrap(),
                l.tcn.gate.w.as_slice().unwrap(),
                l.tcn.gate.b.as_slice().unwrap(),
                l.skip_w.as_slice().unwrap(),
                l.skip_b.as_slice().unwrap(),
                l.gcn_w.as_slice().unwrap(),
                l.gcn_b.as_slice().unwrap(),
            ]);
        }
        v.extend([
            self.end1_w.as_slice().unwrap(),
            self.end1_b.as_slice().unwrap(),
            self.end2_w.as_slice().unwrap(),
            self.end2_b.as_slice().unwrap(),
        ]);
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![self.start_w.as_slice_mut().unwrap(), self.start_b.as_slice_mut().unwrap()];
        for l in &mut self.layers {
            v.extend([
                l.tcn.filter.w.as_slice_mut().unwrap(),
                l.tcn.filter.b.as_slice_mut().unwrap(),
                l.tcn.gate.w.as_slice_mut().unwrap(),
                l.tcn.gate.b.as_slice_mut().unwrap(),
                l.skip_w.as_slice_mut().unwrap(),
                l.skip_b.as_slice_mut().unwrap(),
                l.gcn_w.as_slice_mut().unwrap(),
                l.gcn_b.as_slice_mut().unwrap(),
            ]);
        }
        v.extend([
            self.end1_w.as_slice_mut().unwrap(),
            self.end1_b.as_slice_mut().unwrap(),
            self.end2_w.as_slice_mut().unwrap(),
            self.end2_b.as_slice_mut().unwrap(),
        ]);
        v
    }

    pub fn names(&self) -> Vec<String> {
        let mut v = vec!["start.w".to_string(), "start.b".to_string()];
        for i in 0..self.layers.len() {
            for p in ["filter.w", "filter.b", "gate.w", "gate.b", "skip.w", "skip.b", "gcn.w", "gcn.b"] {
                v.push(format!("layer{i}.{p}"));
            }
        }
        v.extend(["end1.w", "end1.b", "end2.w", "end2.b"].map(String::from));
        v
    }

    pub fn count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

/// Gradients of every learnable tensor; `graph` mirrors [`GraphModule`]'s learnables.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Weights,
    pub graph: Vec<Array2<f64>>,
}

impl Grads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.weights.slices();
        v.extend(self.graph.iter().map(|g| g.as_slice().unwrap()));
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.weights.slices_mut();
        v.extend(self.graph.iter_mut().map(|g| g.as_slice_mut().unwrap()));
        v
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.slices_mut() {
            a.iter_mut().for_each(|x| *x *= s);
        }
    }
}

struct LayerCache {
    input: Array3<f64>,
    gated: GatedCache,
    tcn_out: Array3<f64>,
    mixed: Array3<f64>,
    gcn_out_last: Option<Array2<f64>>,
}

/// Activations of one sample's forward pass.
pub struct ForwardCache {
    input: Array3<f64>,
    layers: Vec<LayerCache>,
    skip: Array2<f64>,
    end1: Array2<f64>,
}

/// The full forecasting network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub config: BackboneConfig,
    pub weights: Weights,
    pub graph: GraphModule,
    #[serde(default)]
    pub skip_source: SkipSource,
}

impl ForecastModel {
    /// Initializes weights from `seed`. The graph module must match `config.num_nodes`.
    pub fn new(config: BackboneConfig, graph: GraphModule, seed: u64) -> Result<Self> {
        config.validate()?;
        if graph.num_nodes() != config.num_nodes {
            return Err(Error::Shape(format!(
                "graph has {} nodes, config declares {}",
                graph.num_nodes(),
                config.num_nodes
            )));
        }
        let mut rng = stream_rng(seed, stream::INIT, 0);
        let weights = Weights::init(&config, &mut rng);
        Ok(ForecastModel {
            config,
            weights,
            graph,
            skip_source: SkipSource::Tcn,
        })
    }

    /// Learnable parameters counted at runtime (weights plus graph learnables).
    pub fn num_parameters(&self) -> usize {
        self.weights.count() + self.graph.slices().iter().map(|s| s.len()).sum::<usize>()
    }

    pub fn parameter_slices(&self) -> Vec<&[f64]> {
        let mut v = self.weights.slices();
        v.extend(self.graph.slices());
        v
    }

    pub fn parameter_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.weights.slices_mut();
        v.extend(self.graph.slices_mut());
        v
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut v = self.weights.names();
        match &self.graph {
            GraphModule::Bayesian(_) => v.push("graph.phi".into()),
            GraphModule::Adaptive(_) => v.extend(["graph.e1".into(), "graph.e2".into()]),
        }
        v
    }

    pub fn zero_grads(&self) -> Grads {
        let graph = match &self.graph {
            GraphModule::Bayesian(b) => vec![Array2::zeros(b.phi.dim())],
            GraphModule::Adaptive(a) => vec![Array2::zeros(a.e1.dim()), Array2::zeros(a.e2.dim())],
        };
        Grads {
            weights: self.weights.zeros_like(),
            graph,
        }
    }

    /// One dropout mask per layer, or `None` entries when no dropout applies.
    pub fn draw_masks<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Option<DropoutMask>> {
        match &self.graph {
            GraphModule::Bayesian(b) if b.dropout_rate > 0.0 => {
                (0..self.config.layers()).map(|_| Some(b.sample_mask(rng))).collect()
            }
            _ => vec![None; self.config.layers()],
        }
    }

    fn check_input(&self, x: &ArrayView3<'_, f64>) -> Result<()> {
        let c = &self.config;
        let expect = (c.num_nodes, c.t_in, c.features_in);
        if x.dim() != expect {
            return Err(Error::Shape(format!("input is {:?}, model expects {:?} (N, t_in, D)", x.dim(), expect)));
        }
        Ok(())
    }

    /// Forward pass for one N×t_in×D window with explicit per-layer masks.
    /// `base` is the undropped graph, normally [`GraphModule::expected`].
    pub fn forward_sample(
        &self,
        x: ArrayView3<'_, f64>,
        base: &Array2<f64>,
        masks: &[Option<DropoutMask>],
    ) -> Result<(Array3<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let c = &self.config;
        if masks.len() != c.layers() {
            return Err(Error::Shape(format!("{} masks for {} layers", masks.len(), c.layers())));
        }
        let n = c.num_nodes;
        let tp = c.padded_len();
        let mut input = Array3::zeros((tp, n, c.features_in));
        input
            .slice_mut(s![tp - c.t_in.., .., ..])
            .assign(&x.permuted_axes([1, 0, 2]));
        let w = &self.weights;
        let mut h = pointwise(input.view(), &w.start_w, &w.start_b);
        let mut skip = Array2::zeros((n, c.skip_channels));
        let mut caches = Vec::with_capacity(c.layers());
        for (l, (lw, mask)) in w.layers.iter().zip(masks).enumerate() {
            let (tcn_out, gated) = lw
                .tcn
                .forward(h.view())
                .map_err(|e| Error::Shape(format!("layer {l}: {e}")))?;
            let tl = tcn_out.dim().0;
            let g: Cow<'_, Array2<f64>> = match mask {
                Some(m) => Cow::Owned(base * m),
                None => Cow::Borrowed(base),
            };
            let (gcn_out, mixed) = graph_conv_seq(&g, tcn_out.view(), &lw.gcn_w, &lw.gcn_b);
            let tap = match self.skip_source {
                SkipSource::Tcn => tcn_out.index_axis(Axis(0), tl - 1),
                SkipSource::Graph => gcn_out.index_axis(Axis(0), tl - 1),
            };
            skip += &tap.dot(&lw.skip_w);
            skip += &lw.skip_b;
            let gcn_out_last = (self.skip_source == SkipSource::Graph).then(|| tap.to_owned());
            let t0 = h.dim().0 - tl;
            let next = gcn_out + h.slice(s![t0.., .., ..]);
            caches.push(LayerCache {
                input: std::mem::replace(&mut h, next),
                gated,
                tcn_out,
                mixed,
                gcn_out_last,
            });
        }
        let relu = |v: f64| v.max(0.0);
        let mut end1 = skip.mapv(relu).dot(&w.end1_w);
        end1 += &w.end1_b;
        let mut out = end1.mapv(relu).dot(&w.end2_w);
        out += &w.end2_b;
        let out = out
            .into_shape_with_order((n, c.horizon, c.features_out))
            .expect("contiguous");
        Ok((
            out,
            ForwardCache {
                input,
                layers: caches,
                skip,
                end1,
            },
        ))
    }

    /// Backpropagates `dout` (N×horizon×D_out) through a cached forward pass.
    pub fn backward_sample(
        &self,
        cache: &ForwardCache,
        base: &Array2<f64>,
        masks: &[Option<DropoutMask>],
        dout: ArrayView3<'_, f64>,
    ) -> Grads {
        let c = &self.config;
        let n = c.num_nodes;
        let w = &self.weights;
        let mut g = self.zero_grads();
        let d2 = dout
            .to_owned()
            .into_shape_with_order((n, c.horizon * c.features_out))
            .expect("contiguous");
        let q = cache.end1.mapv(|v| v.max(0.0));
        g.weights.end2_w = q.t().dot(&d2);
        g.weights.end2_b = d2.sum_axis(Axis(0));
        let mut de1 = d2.dot(&w.end2_w.t());
        de1.zip_mut_with(&cache.end1, |d, &v| {
            if v <= 0.0 {
                *d = 0.0
            }
        });
        let r = cache.skip.mapv(|v| v.max(0.0));
        g.weights.end1_w = r.t().dot(&de1);
        g.weights.end1_b = de1.sum_axis(Axis(0));
        let mut dskip = de1.dot(&w.end1_w.t());
        dskip.zip_mut_with(&cache.skip, |d, &v| {
            if v <= 0.0 {
                *d = 0.0
            }
        });

        let mut dgraph = Array2::<f64>::zeros((n, n));
        let last = cache.layers.last().expect("at least one layer");
        let mut dh = Array3::<f64>::zeros(last.tcn_out.dim());
        for (l, lc) in cache.layers.iter().enumerate().rev() {
            let lw = &w.layers[l];
            let lg = &mut g.weights.layers[l];
            let t_in = lc.input.dim().0;
            let tl = lc.tcn_out.dim().0;
            let mut dh_in = Array3::<f64>::zeros(lc.input.dim());
            {
                let mut res = dh_in.slice_mut(s![t_in - tl.., .., ..]);
                res += &dh;
            }
            let mut dgcn = dh;
            let tap_grad = dskip.dot(&lw.skip_w.t());
            let tap = match self.skip_source {
                SkipSource::Tcn => lc.tcn_out.index_axis(Axis(0), tl - 1).to_owned(),
                SkipSource::Graph => lc.gcn_out_last.clone().expect("cached"),
            };
            lg.skip_w = tap.t().dot(&dskip);
            lg.skip_b = dskip.sum_axis(Axis(0));
            if self.skip_source == SkipSource::Graph {
                let mut row = dgcn.index_axis_mut(Axis(0), tl - 1);
                row += &tap_grad;
            }
            let gl: Cow<'_, Array2<f64>> = match &masks[l] {
                Some(m) => Cow::Owned(base * m),
                None => Cow::Borrowed(base),
            };
            let (mut dx, dg) = graph_conv_seq_backward(
                &gl,
                lc.tcn_out.view(),
                lc.mixed.view(),
                &lw.gcn_w,
                dgcn.view(),
                &mut lg.gcn_w,
                &mut lg.gcn_b,
            );
            match &masks[l] {
                Some(m) => dgraph += &(&dg * m),
                None => dgraph += &dg,
            }
            if self.skip_source == SkipSource::Tcn {
                let mut row = dx.index_axis_mut(Axis(0), tl - 1);
                row += &tap_grad;
            }
            dh_in += &lw.tcn.backward(lc.input.view(), &lc.gated, dx.view(), &mut lg.tcn);
            dh = dh_in;
        }
        let (_, dsw, dsb) = pointwise_backward(cache.input.view(), &w.start_w, dh.view());
        g.weights.start_w = dsw;
        g.weights.start_b = dsb;

        match &self.graph {
            GraphModule::Bayesian(_) => g.graph[0] = dgraph,
            GraphModule::Adaptive(a) => {
                let (d1, d2) = a.backward(base, &dgraph);
                g.graph = vec![d1, d2];
            }
        }
        g
    }

    /// Batched forward on B×N×t_in×D. With `training`, fresh masks are drawn from `rng` per
    /// sample and per layer (in sample order); otherwise the expected graph is used.
    pub fn forward<R: Rng + ?Sized>(&self, x: ArrayView4<'_, f64>, training: bool, rng: &mut R) -> Result<Array4<f64>> {
        let b = x.dim().0;
        let masks: Vec<Vec<Option<DropoutMask>>> = (0..b)
            .map(|_| {
                if training {
                    self.draw_masks(rng)
                } else {
                    vec![None; self.config.layers()]
                }
            })
            .collect();
        self.forward_with_masks(x, &masks)
    }

    /// Deterministic prediction with the expected graph.
    pub fn predict(&self, x: ArrayView4<'_, f64>) -> Result<Array4<f64>> {
        let masks = vec![vec![None; self.config.layers()]; x.dim().0];
        self.forward_with_masks(x, &masks)
    }

    pub fn forward_with_masks(&self, x: ArrayView4<'_, f64>, masks: &[Vec<Option<DropoutMask>>]) -> Result<Array4<f64>> {
        let c = &self.config;
        let b = x.dim().0;
        let base = self.graph.expected();
        let outs: Vec<Array3<f64>> = (0..b)
            .into_par_iter()
            .map(|i| self.forward_sample(x.index_axis(Axis(0), i), &base, &masks[i]).map(|(o, _)| o))
            .collect::<Result<_>>()?;
        let mut out = Array4::zeros((b, c.num_nodes, c.horizon, c.features_out));
        for (i, o) in outs.into_iter().enumerate() {
            out.index_axis_mut(Axis(0), i).assign(&o);
        }
        Ok(out)
    }

    /// Intermediate layer outputs (time, node, channel) for the causality probe.
    pub fn hidden_states(&self, x: ArrayView3<'_, f64>) -> Result<Vec<Array3<f64>>> {
        let base = self.graph.expected();
        let masks = vec![None; self.config.layers()];
        let (_, cache) = self.forward_sample(x, &base, &masks)?;
        Ok(cache.layers.into_iter().map(|l| l.tcn_out).collect())
    }
}

/// Monte Carlo prediction: the mean of `samples` stochastic passes, plus each pass.
#[derive(Debug, Clone)]
pub struct McPrediction {
    pub mean: Array4<f64>,
    pub samples: Vec<Array4<f64>>,
}

impl McPrediction {
    /// Elementwise standard deviation across samples.
    pub fn std(&self) -> Array4<f64> {
        let s = self.samples.len() as f64;
        let mut var = Array4::zeros(self.mean.dim());
        for smp in &self.samples {
            ndarray::Zip::from(&mut var)
                .and(smp)
                .and(&self.mean)
                .for_each(|v, &x, &m| *v += (x - m).powi(2) / s);
        }
        var.mapv_into(f64::sqrt)
    }
}

/// Runs `samples` forward passes with graph dropout active, each from its own seeded stream.
pub fn mc_predict(model: &ForecastModel, x: ArrayView4<'_, f64>, samples: usize, seed: u64) -> Result<McPrediction> {
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one Monte Carlo sample is required".into()));
    }
    let outs = (0..samples)
        .map(|s| {
            let mut rng = stream_rng(seed, stream::MC, s as u64);
            model.forward(x, true, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mean = Array4::zeros(outs[0].dim());
    for o in &outs {
        mean += o;
    }
    mean /= samples as f64;
    Ok(McPrediction { mean, samples: outs })
}

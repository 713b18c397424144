//! The Bayesian graph: a frozen adjacency plus a learnable one, sampled with inverted dropout.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Initial value of every entry of the learnable adjacency.
pub const PHI_INIT: f64 = 1e-6;

/// Default Monte Carlo dropout probability.
pub const DEFAULT_DROPOUT: f64 = 0.5;

/// When dropout masks are redrawn during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphSampleScope {
    /// Once per epoch, shared by every batch of that epoch.
    Epoch,
    /// Per forward pass: per sample and per layer.
    #[default]
    Batch,
}

/// Per-entry multipliers: `0` for dropped entries, `1/(1-p)` for survivors.
pub type DropoutMask = Array2<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesianGraph {
    /// Normalized constant adjacency. Never touched by training.
    pub a_const: Array2<f64>,
    /// Learnable adjacency: any sign, possibly asymmetric.
    pub phi: Array2<f64>,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl BayesianGraph {
    pub fn new(a_const: Array2<f64>, dropout_rate: f64, seed: u64) -> Result<Self> {
        if !a_const.is_square() {
            return Err(Error::Shape(format!("constant adjacency must be square, got {:?}", a_const.dim())));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidArgument(format!("dropout rate must lie in [0, 1), got {dropout_rate}")));
        }
        let phi = Array2::from_elem(a_const.dim(), PHI_INIT);
        Ok(BayesianGraph {
            a_const,
            phi,
            dropout_rate,
            seed,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.a_const.nrows()
    }

    /// `Ã + φ`, the expectation of the sampler.
    pub fn combined(&self) -> Array2<f64> {
        &self.a_const + &self.phi
    }

    pub fn sample_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> DropoutMask {
        let p = self.dropout_rate;
        let n = self.num_nodes();
        if p == 0.0 {
            return Array2::ones((n, n));
        }
        let keep = 1.0 / (1.0 - p);
        Array2::from_shape_simple_fn((n, n), || if rng.random::<f64>() < p { 0.0 } else { keep })
    }

    /// `mask ⊙ (Ã + φ)`, or `Ã + φ` when no mask is given.
    pub fn apply_mask(&self, mask: Option<&DropoutMask>) -> Array2<f64> {
        let mut g = self.combined();
        if let Some(m) = mask {
            g *= m;
        }
        g
    }
}

/// One realization of the graph. With `training` false this is the deterministic expectation.
pub fn sample_graph<R: Rng + ?Sized>(bg: &BayesianGraph, training: bool, rng: &mut R) -> Array2<f64> {
    if training && bg.dropout_rate > 0.0 {
        let m = bg.sample_mask(rng);
        bg.apply_mask(Some(&m))
    } else {
        bg.combined()
    }
}

/// `G · X · W` for a given graph realization `G` (N×N), features `X` (N×D_in), weights `W` (D_in×D_out).
pub fn graph_conv(g: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if g.nrows() != g.ncols() || g.ncols() != x.nrows() || x.ncols() != w.nrows() {
        return Err(Error::Shape(format!(
            "graph {:?}, features {:?}, weights {:?}",
            g.dim(),
            x.dim(),
            w.dim()
        )));
    }
    Ok(g.dot(&x).dot(&w))
}

/// Gradients of `G·X·W` given the upstream gradient: `(dX, dG, dW)`.
pub fn graph_conv_backward(
    g: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    dout: ArrayView2<'_, f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let gx = g.dot(&x);
    let dw = gx.t().dot(&dout);
    let dgx = dout.dot(&w.t());
    let dg = dgx.dot(&x.t());
    let dx = g.t().dot(&dgx);
    (dx, dg, dw)
}

/// `Dropout(Ã + φ) X W`.
pub fn bgcn_forward<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    bg: &BayesianGraph,
    w: ArrayView2<'_, f64>,
    training: bool,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let g = sample_graph(bg, training, rng);
    graph_conv(g.view(), x, w)
}

/// Attention-style adjacency `SoftMax(ReLU(E₁E₂ᵀ))` with learnable node embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveAdjacency {
    pub e1: Array2<f64>,
    pub e2: Array2<f64>,
}

impl AdaptiveAdjacency {
    pub fn new<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Self {
        let mut draw = || Array2::from_shape_simple_fn((n, dim), || rng.random_range(-1.0..1.0));
        let e1 = draw();
        let e2 = draw();
        AdaptiveAdjacency { e1, e2 }
    }

    pub fn adjacency(&self) -> Array2<f64> {
        adaptive_adjacency(self.e1.view(), self.e2.view())
    }

    /// Gradients w.r.t. `(E₁, E₂)` given `∂L/∂A` and the forward output `A`.
    pub fn backward(&self, a: &Array2<f64>, da: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let m = self.e1.dot(&self.e2.t());
        let mut dm = Array2::zeros(m.dim());
        for i in 0..m.nrows() {
            let inner: f64 = a.row(i).dot(&da.row(i));
            for j in 0..m.ncols() {
                if m[[i, j]] > 0.0 {
                    dm[[i, j]] = a[[i, j]] * (da[[i, j]] - inner);
                }
            }
        }
        (dm.dot(&self.e2), dm.t().dot(&self.e1))
    }
}

/// Row-wise softmax of `ReLU(E₁E₂ᵀ)`: nonnegative, rows sum to one.
pub fn adaptive_adjacency(e1: ArrayView2<'_, f64>, e2: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut m = e1.dot(&e2.t()).mapv(|v| v.max(0.0));
    for mut row in m.rows_mut() {
        let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - mx).exp());
        let s = row.sum();
        row /= s;
    }
    m
}

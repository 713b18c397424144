//! Layer primitives on sequences laid out as `(time, node, channel)`.
//!
//! With this layout every channel mix is one `(T·N × C_in)·(C_in × C_out)` product and every
//! time slice is a contiguous block.

use ndarray::{s, Array1, Array2, Array3, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sigmoid;

/// Reshapes an owned standard-layout sequence into `(T·N, C)`.
fn to_rows(x: ArrayView3<'_, f64>) -> Array2<f64> {
    let (t, n, c) = x.dim();
    x.to_owned().into_shape_with_order((t * n, c)).expect("contiguous")
}

fn from_rows(m: Array2<f64>, t: usize, n: usize) -> Array3<f64> {
    let c = m.ncols();
    m.into_shape_with_order((t, n, c)).expect("contiguous")
}

/// 1×1 convolution: `y = x·W + b`, `W` is `C_in × C_out`.
pub fn pointwise(x: ArrayView3<'_, f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array3<f64> {
    let (t, n, _) = x.dim();
    let mut y = to_rows(x).dot(w);
    y += b;
    from_rows(y, t, n)
}

/// Returns `(dx, dW, db)`.
pub fn pointwise_backward(
    x: ArrayView3<'_, f64>,
    w: &Array2<f64>,
    dy: ArrayView3<'_, f64>,
) -> (Array3<f64>, Array2<f64>, Array1<f64>) {
    let (t, n, _) = x.dim();
    let xr = to_rows(x);
    let dyr = to_rows(dy);
    let dw = xr.t().dot(&dyr);
    let db = dyr.sum_axis(Axis(0));
    let dx = from_rows(dyr.dot(&w.t()), t, n);
    (dx, dw, db)
}

/// Causal dilated convolution along time. `w` is `k × C_in × C_out`; output step `t` sees
/// input steps `t, t + d, …, t + (k−1)d`, i.e. it is aligned with input step `t + (k−1)d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilatedConv {
    pub w: Array3<f64>,
    pub b: Array1<f64>,
    pub dilation: usize,
}

impl DilatedConv {
    pub fn kernel(&self) -> usize {
        self.w.dim().0
    }

    pub fn output_len(&self, t: usize) -> Option<usize> {
        t.checked_sub(self.dilation * (self.kernel() - 1)).filter(|&v| v > 0)
    }

    pub fn forward(&self, x: ArrayView3<'_, f64>) -> Result<Array3<f64>> {
        let (t, n, _) = x.dim();
        let out_t = self.output_len(t).ok_or_else(|| {
            Error::Shape(format!(
                "input of {t} steps is shorter than the receptive field of kernel {} dilation {}",
                self.kernel(),
                self.dilation
            ))
        })?;
        let c_out = self.w.dim().2;
        let mut y = Array2::zeros((out_t * n, c_out));
        y += &self.b;
        for j in 0..self.kernel() {
            let off = j * self.dilation;
            let xs = to_rows(x.slice(s![off..off + out_t, .., ..]));
            ndarray::linalg::general_mat_mul(1.0, &xs, &self.w.index_axis(Axis(0), j), 1.0, &mut y);
        }
        Ok(from_rows(y, out_t, n))
    }

    /// Accumulates parameter gradients into `grad` and returns `dx`.
    pub fn backward(&self, x: ArrayView3<'_, f64>, dy: ArrayView3<'_, f64>, grad: &mut DilatedConv) -> Array3<f64> {
        let (t, n, c_in) = x.dim();
        let out_t = dy.dim().0;
        let dyr = to_rows(dy);
        grad.b += &dyr.sum_axis(Axis(0));
        let mut dx = Array3::zeros((t, n, c_in));
        for j in 0..self.kernel() {
            let off = j * self.dilation;
            let xs = to_rows(x.slice(s![off..off + out_t, .., ..]));
            let mut gw = grad.w.index_axis_mut(Axis(0), j);
            ndarray::linalg::general_mat_mul(1.0, &xs.t(), &dyr, 1.0, &mut gw);
            let dxs = dyr.dot(&self.w.index_axis(Axis(0), j).t());
            let mut dst = dx.slice_mut(s![off..off + out_t, .., ..]);
            dst += &from_rows(dxs, out_t, n);
        }
        dx
    }

    pub fn zeros_like(&self) -> DilatedConv {
        DilatedConv {
            w: Array3::zeros(self.w.dim()),
            b: Array1::zeros(self.b.dim()),
            dilation: self.dilation,
        }
    }
}

/// `tanh(conv_a(x)) ⊙ σ(conv_b(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedTcn {
    pub filter: DilatedConv,
    pub gate: DilatedConv,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GatedCache {
    pub tanh: Array3<f64>,
    pub sig: Array3<f64>,
}

impl GatedTcn {
    pub fn forward(&self, x: ArrayView3<'_, f64>) -> Result<(Array3<f64>, GatedCache)> {
        let tanh = self.filter.forward(x)?.mapv_into(f64::tanh);
        let sig = self.gate.forward(x)?.mapv_into(sigmoid);
        let out = &tanh * &sig;
        Ok((out, GatedCache { tanh, sig }))
    }

    pub fn backward(&self, x: ArrayView3<'_, f64>, cache: &GatedCache, dy: ArrayView3<'_, f64>, grad: &mut GatedTcn) -> Array3<f64> {
        let mut da = dy.to_owned();
        ndarray::Zip::from(&mut da)
            .and(&cache.tanh)
            .and(&cache.sig)
            .for_each(|d, &a, &s| *d *= s * (1.0 - a * a));
        let mut ds = dy.to_owned();
        ndarray::Zip::from(&mut ds)
            .and(&cache.tanh)
            .and(&cache.sig)
            .for_each(|d, &a, &s| *d *= a * s * (1.0 - s));
        let mut dx = self.filter.backward(x, da.view(), &mut grad.filter);
        dx += &self.gate.backward(x, ds.view(), &mut grad.gate);
        dx
    }

    pub fn zeros_like(&self) -> GatedTcn {
        GatedTcn {
            filter: self.filter.zeros_like(),
            gate: self.gate.zeros_like(),
        }
    }
}

/// Graph convolution applied at every time step with one graph: `y_t = (G x_t) W + b`.
/// Returns the output and the node-mixed input `G x` (needed for backward).
pub fn graph_conv_seq(
    g: &Array2<f64>,
    x: ArrayView3<'_, f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
) -> (Array3<f64>, Array3<f64>) {
    let (t, n, c) = x.dim();
    let mut mixed = Array3::zeros((t, n, c));
    for k in 0..t {
        let xt = x.index_axis(Axis(0), k);
        let mut dst = mixed.index_axis_mut(Axis(0), k);
        ndarray::linalg::general_mat_mul(1.0, g, &xt, 0.0, &mut dst);
    }
    let out = pointwise(mixed.view(), w, b);
    (out, mixed)
}

/// Returns `(dx, dG)` and accumulates `dW`, `db`.
pub fn graph_conv_seq_backward(
    g: &Array2<f64>,
    x: ArrayView3<'_, f64>,
    mixed: ArrayView3<'_, f64>,
    w: &Array2<f64>,
    dy: ArrayView3<'_, f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> (Array3<f64>, Array2<f64>) {
    let (dmixed, gw, gb) = pointwise_backward(mixed, w, dy);
    *dw += &gw;
    *db += &gb;
    let (t, n, c) = x.dim();
    let mut dx = Array3::zeros((t, n, c));
    let mut dg = Array2::zeros(g.dim());
    for k in 0..t {
        let dm = dmixed.index_axis(Axis(0), k);
        let xt = x.index_axis(Axis(0), k);
        ndarray::linalg::general_mat_mul(1.0, &dm, &xt.t(), 1.0, &mut dg);
        let mut dst = dx.index_axis_mut(Axis(0), k);
        ndarray::linalg::general_mat_mul(1.0, &g.t(), &dm, 0.0, &mut dst);
    }
    (dx, dg)
}

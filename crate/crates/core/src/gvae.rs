//! Graph variational auto-encoder node embeddings.
//!
//! Encoder: two graph convolutions over the self-loop-normalized topology with identity node
//! features, `H = relu(Â W₀)`, `μ = Â H W_μ`, `log σ² = Â H W_σ`. Decoder: `σ(z_i · z_j)`.
//! Loss: class-reweighted binary cross-entropy over the dense adjacency plus the KL divergence
//! to a standard normal.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::RoadGraph;
use crate::error::{Error, Result};
use crate::linalg::{glorot, sigmoid, softplus};
use crate::map_graph::{normalize_adjacency, AdjacencyNorm};
use crate::optim::Adam;
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GvaeConfig {
    pub hidden: usize,
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for GvaeConfig {
    fn default() -> Self {
        GvaeConfig {
            hidden: 32,
            dim: 16,
            epochs: 200,
            lr: 0.01,
            seed: 0,
        }
    }
}

/// Per-node latent vectors. `vectors` are the posterior means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEmbeddings {
    pub vectors: Array2<f64>,
    pub mu: Array2<f64>,
    pub log_var: Array2<f64>,
}

impl NodeEmbeddings {
    /// Embeddings known only by their vectors (variance zero).
    pub fn from_vectors(vectors: Array2<f64>) -> Result<Self> {
        if !crate::linalg::all_finite(vectors.iter()) {
            return Err(Error::InvalidArgument("embeddings must be finite".into()));
        }
        let log_var = Array2::from_elem(vectors.dim(), f64::NEG_INFINITY);
        Ok(NodeEmbeddings {
            mu: vectors.clone(),
            vectors,
            log_var,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Text matrix, one row per node in manifest order, space separated.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for row in self.vectors.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                l.split_whitespace()
                    .map(|c| {
                        c.parse::<f64>()
                            .map_err(|_| Error::InvalidArgument(format!("embedding row {}: bad value '{c}'", i + 1)))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::Shape("ragged embedding rows".into()));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let n = flat.len().checked_div(c).unwrap_or(0);
        Self::from_vectors(Array2::from_shape_vec((n, c), flat).map_err(|e| Error::Shape(e.to_string()))?)
    }
}

/// Symmetric, zero-diagonal squared Euclidean distances between embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix(Array2<f64>);

impl DistanceMatrix {
    pub fn new(z: Array2<f64>) -> Result<Self> {
        if !z.is_square() {
            return Err(Error::Shape(format!("distance matrix must be square, got {:?}", z.dim())));
        }
        Ok(DistanceMatrix(z))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// `Z_pq = ‖e_p − e_q‖²`.
pub fn pairwise_sq_distances(emb: &NodeEmbeddings) -> Result<DistanceMatrix> {
    let e = &emb.vectors;
    if !crate::linalg::all_finite(e.iter()) {
        return Err(Error::InvalidArgument("embeddings must be finite".into()));
    }
    let n = e.nrows();
    let mut z = Array2::zeros((n, n));
    for p in 0..n {
        for q in p + 1..n {
            let d: f64 = e.row(p).iter().zip(e.row(q)).map(|(a, b)| (a - b).powi(2)).sum();
            z[[p, q]] = d;
            z[[q, p]] = d;
        }
    }
    Ok(DistanceMatrix(z))
}

/// Encoder weights. Node features are the identity, so the first layer is `Â W₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gvae {
    pub w0: Array2<f64>,
    pub w_mu: Array2<f64>,
    pub w_var: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct GvaeGrads {
    pub w0: Array2<f64>,
    pub w_mu: Array2<f64>,
    pub w_var: Array2<f64>,
}

/// Fixed quantities derived from the training graph.
#[derive(Debug, Clone)]
pub struct GvaeTarget {
    pub a_hat: Array2<f64>,
    pub labels: Array2<f64>,
    pub pos_weight: f64,
    pub norm: f64,
}

impl GvaeTarget {
    /// `adjacency` must be symmetric; self-loops are added for both encoder and labels.
    pub fn new(adjacency: ArrayView2<'_, f64>) -> Self {
        let n = adjacency.nrows();
        let a_hat = normalize_adjacency(adjacency, AdjacencyNorm::Symmetric);
        let mut labels = adjacency.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        labels.diag_mut().fill(1.0);
        let total = (n * n) as f64;
        let pos = labels.sum();
        let neg = total - pos;
        let (pos_weight, norm) = if neg > 0.0 {
            (neg / pos, total / (2.0 * neg))
        } else {
            (1.0, 1.0)
        };
        GvaeTarget {
            a_hat,
            labels,
            pos_weight,
            norm,
        }
    }
}

/// Reparameterized latent `μ + ε ⊙ exp(½ log σ²)`. A `-∞` log-variance yields `μ` exactly.
pub fn reparameterize(mu: &Array2<f64>, log_var: &Array2<f64>, eps: &Array2<f64>) -> Array2<f64> {
    let mut z = mu.clone();
    ndarray::Zip::from(&mut z)
        .and(log_var)
        .and(eps)
        .for_each(|z, &lv, &e| {
            let sd = (0.5 * lv).exp();
            if sd != 0.0 {
                *z += e * sd;
            }
        });
    z
}

/// `KL(N(μ, σ²) ‖ N(0, 1))` in the scaling used by the loss: `-(0.5/N²) Σ (1 + log σ² − μ² − σ²)`.
pub fn kl_term(mu: &Array2<f64>, log_var: &Array2<f64>) -> f64 {
    let n = mu.nrows() as f64;
    let s: f64 = mu
        .iter()
        .zip(log_var.iter())
        .map(|(&m, &lv)| 1.0 + lv - m * m - lv.exp())
        .sum();
    -0.5 / (n * n) * s
}

/// Probability of an edge under the inner-product decoder.
pub fn edge_probability(zi: ndarray::ArrayView1<'_, f64>, zj: ndarray::ArrayView1<'_, f64>) -> f64 {
    sigmoid(zi.dot(&zj))
}

impl Gvae {
    pub fn init<R: Rng>(rng: &mut R, n: usize, hidden: usize, dim: usize) -> Self {
        Gvae {
            w0: glorot(rng, n, hidden),
            w_mu: glorot(rng, hidden, dim),
            w_var: glorot(rng, hidden, dim),
        }
    }

    /// Returns `(μ, log σ²)`.
    pub fn encode(&self, a_hat: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let h = a_hat.dot(&self.w0).mapv(|v| v.max(0.0));
        let q = a_hat.dot(&h);
        (q.dot(&self.w_mu), q.dot(&self.w_var))
    }

    /// Loss and gradients for a fixed noise draw `eps` (N×c).
    pub fn loss_and_grads(&self, target: &GvaeTarget, eps: &Array2<f64>) -> (f64, GvaeGrads) {
        let a = &target.a_hat;
        let n = a.nrows() as f64;
        let p1 = a.dot(&self.w0);
        let h = p1.mapv(|v| v.max(0.0));
        let q = a.dot(&h);
        let mu = q.dot(&self.w_mu);
        let lv = q.dot(&self.w_var);
        let z = reparameterize(&mu, &lv, eps);
        let logits = z.dot(&z.t());

        let scale = target.norm / (n * n);
        let mut recon = 0.0;
        let mut dlogits = Array2::zeros(logits.dim());
        ndarray::Zip::from(&mut dlogits)
            .and(&logits)
            .and(&target.labels)
            .for_each(|d, &l, &y| {
                recon += target.pos_weight * y * softplus(-l) + (1.0 - y) * softplus(l);
                *d = scale * (-target.pos_weight * y * (1.0 - sigmoid(l)) + (1.0 - y) * sigmoid(l));
            });
        let loss = scale * recon + kl_term(&mu, &lv);

        let dz = (&dlogits + &dlogits.t()).dot(&z);
        let kl_scale = 1.0 / (n * n);
        let mut dmu = dz.clone();
        dmu.zip_mut_with(&mu, |d, &m| *d += kl_scale * m);
        let mut dlv = Array2::zeros(lv.dim());
        ndarray::Zip::from(&mut dlv)
            .and(&dz)
            .and(&lv)
            .and(eps)
            .for_each(|d, &g, &l, &e| {
                *d = g * e * 0.5 * (0.5 * l).exp() - 0.5 * kl_scale * (1.0 - l.exp());
            });
        let g_mu = q.t().dot(&dmu);
        let g_var = q.t().dot(&dlv);
        let dq = dmu.dot(&self.w_mu.t()) + dlv.dot(&self.w_var.t());
        let mut dp1 = a.t().dot(&dq);
        dp1.zip_mut_with(&p1, |d, &p| {
            if p <= 0.0 {
                *d = 0.0
            }
        });
        let g0 = a.t().dot(&dp1);
        (
            loss,
            GvaeGrads {
                w0: g0,
                w_mu: g_mu,
                w_var: g_var,
            },
        )
    }
}

/// Trains on a symmetric adjacency; returns the embeddings and the per-epoch loss.
pub fn gvae_train_adjacency(adjacency: ArrayView2<'_, f64>, cfg: &GvaeConfig) -> Result<(NodeEmbeddings, Vec<f64>)> {
    let n = adjacency.nrows();
    if !adjacency.is_square() || n == 0 {
        return Err(Error::Shape(format!("adjacency must be square and nonempty, got {:?}", adjacency.dim())));
    }
    if cfg.dim < 2 || cfg.hidden == 0 {
        return Err(Error::InvalidArgument(format!(
            "embedding dim must be >= 2 and hidden width >= 1 (got {}, {})",
            cfg.dim, cfg.hidden
        )));
    }
    if !adjacency.iter().any(|&v| v > 0.0) {
        return Err(Error::Degenerate("observed adjacency has no edges".into()));
    }
    let target = GvaeTarget::new(adjacency);
    let mut rng = stream_rng(cfg.seed, stream::GVAE, 0);
    let mut model = Gvae::init(&mut rng, n, cfg.hidden, cfg.dim);
    let mut adam = Adam::new(&[model.w0.len(), model.w_mu.len(), model.w_var.len()]);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let eps = Array2::from_shape_simple_fn((n, cfg.dim), || rng.sample::<f64, _>(StandardNormal));
        let (loss, g) = model.loss_and_grads(&target, &eps);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, batch: None });
        }
        trace.push(loss);
        let Gvae { w0, w_mu, w_var } = &mut model;
        adam.step(
            &mut [
                w0.as_slice_mut().unwrap(),
                w_mu.as_slice_mut().unwrap(),
                w_var.as_slice_mut().unwrap(),
            ],
            &[g.w0.as_slice().unwrap(), g.w_mu.as_slice().unwrap(), g.w_var.as_slice().unwrap()],
            cfg.lr,
        );
    }
    let (mu, log_var) = model.encode(&target.a_hat);
    if !crate::linalg::all_finite(mu.iter()) {
        return Err(Error::Divergence {
            epoch: cfg.epochs,
            batch: None,
        });
    }
    Ok((
        NodeEmbeddings {
            vectors: mu.clone(),
            mu,
            log_var,
        },
        trace,
    ))
}

/// Embeds the roads of `graph` using its symmetrized observed adjacency.
pub fn gvae_train(graph: &RoadGraph, cfg: &GvaeConfig) -> Result<NodeEmbeddings> {
    gvae_train_adjacency(graph.symmetrized().view(), cfg).map(|(e, _)| e)
}

/// Mean of `Z` over pairs selected by `pick(p, q)` with `p != q`.
pub fn mean_pair_distance(z: &DistanceMatrix, pick: impl Fn(usize, usize) -> bool) -> f64 {
    let m = z.matrix();
    let (mut s, mut c) = (0.0, 0usize);
    for ((p, q), &v) in m.indexed_iter() {
        if p != q && pick(p, q) {
            s += v;
            c += 1;
        }
    }
    s / c.max(1) as f64
}

//! MAP estimate of the constant graph: a symmetric, nonnegative adjacency minimizing
//!
//! ```text
//! ‖A ⊙ Z‖₁ − α·1ᵀ log(A·1) + β‖A‖²_F
//! ```
//!
//! over the upper-triangular edge weights, solved by projected gradient descent.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gvae::DistanceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    Fixed,
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGraphConfig {
    /// Log-barrier weight (controls the scale of the degrees).
    pub alpha: f64,
    /// Frobenius weight (controls sparsity).
    pub beta: f64,
    pub max_iters: usize,
    /// Relative objective change below which the solver stops.
    pub tol: f64,
    pub step_rule: StepRule,
    /// Step length for [`StepRule::Fixed`]; initial trial step for backtracking.
    pub step_size: f64,
    /// Rescale Z to unit off-diagonal mean before solving.
    pub normalize_z: bool,
}

impl Default for MapGraphConfig {
    fn default() -> Self {
        MapGraphConfig {
            alpha: 1.0,
            beta: 0.5,
            max_iters: 20_000,
            tol: 1e-12,
            step_rule: StepRule::Backtracking,
            step_size: 0.1,
            normalize_z: true,
        }
    }
}

impl MapGraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.tol > 0.0 && self.step_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha, beta, tol and step_size must be positive (got {}, {}, {}, {})",
                self.alpha, self.beta, self.tol, self.step_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGraph {
    /// Learned symmetric adjacency, zero diagonal.
    pub adjacency: Array2<f64>,
    /// `D̃^{-1/2}(A + I)D̃^{-1/2}`.
    pub normalized: Array2<f64>,
    /// Objective after every accepted step (first entry: the starting point).
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The (possibly rescaled) distances the objective was evaluated on.
    pub z_scale: f64,
}

impl MapGraph {
    pub fn final_objective(&self) -> Option<f64> {
        self.objective_trace.last().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyNorm {
    /// `D̃^{-1/2}(A + I)D̃^{-1/2}`
    Symmetric,
    /// `D̃^{-1}(A + I)`
    Row,
}

/// Adds self-loops and normalizes by the degrees of `A + I`.
pub fn normalize_adjacency(a: ArrayView2<'_, f64>, mode: AdjacencyNorm) -> Array2<f64> {
    let n = a.nrows();
    let mut s = a.to_owned();
    for i in 0..n {
        s[[i, i]] += 1.0;
    }
    let deg: Vec<f64> = s.rows().into_iter().map(|r| r.sum()).collect();
    match mode {
        AdjacencyNorm::Symmetric => {
            let inv: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
            for ((i, j), v) in s.indexed_iter_mut() {
                *v *= inv[i] * inv[j];
            }
        }
        AdjacencyNorm::Row => {
            for ((i, _), v) in s.indexed_iter_mut() {
                *v /= deg[i];
            }
        }
    }
    s
}

/// Objective evaluated on a full matrix.
pub fn map_objective(a: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>, alpha: f64, beta: f64) -> Result<f64> {
    if !a.is_square() || a.dim() != z.dim() {
        return Err(Error::Shape(format!("A is {:?}, Z is {:?}", a.dim(), z.dim())));
    }
    if a.iter().any(|&v| v < 0.0) || !crate::linalg::is_symmetric(a) {
        return Err(Error::InvalidArgument("A must be symmetric and nonnegative".into()));
    }
    let l1: f64 = a.iter().zip(z.iter()).map(|(x, y)| (x * y).abs()).sum();
    let mut barrier = 0.0;
    for (i, row) in a.rows().into_iter().enumerate() {
        let d = row.sum();
        if d <= 0.0 {
            return Err(Error::BarrierViolation { node: i });
        }
        barrier += d.ln();
    }
    let fro: f64 = a.iter().map(|x| x * x).sum();
    Ok(l1 - alpha * barrier + beta * fro)
}

/// The objective restricted to upper-triangular weights `w_k`, `k ↔ (i < j)` in row-major order.
#[derive(Debug, Clone)]
pub struct MapProblem {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub z: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl MapProblem {
    pub fn new(z: ArrayView2<'_, f64>, alpha: f64, beta: f64) -> Self {
        let n = z.nrows();
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let zv = edges.iter().map(|&(i, j)| z[[i, j]]).collect();
        MapProblem {
            n,
            edges,
            z: zv,
            alpha,
            beta,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self, w: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for (&(i, j), &wk) in self.edges.iter().zip(w) {
            d[i] += wk;
            d[j] += wk;
        }
        d
    }

    /// `+∞` when a degree is not strictly positive.
    pub fn value(&self, w: &[f64]) -> f64 {
        let deg = self.degrees(w);
        if deg.iter().any(|&d| d <= 0.0) {
            return f64::INFINITY;
        }
        let lin: f64 = w.iter().zip(&self.z).map(|(a, b)| a * b).sum();
        let sq: f64 = w.iter().map(|a| a * a).sum();
        2.0 * lin - self.alpha * deg.iter().map(|d| d.ln()).sum::<f64>() + 2.0 * self.beta * sq
    }

    /// `∂f/∂w_k = 2 z_k − α (1/d_i + 1/d_j) + 4 β w_k`.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let deg = self.degrees(w);
        self.edges
            .iter()
            .zip(w.iter().zip(&self.z))
            .map(|(&(i, j), (&wk, &zk))| 2.0 * zk - self.alpha * (1.0 / deg[i] + 1.0 / deg[j]) + 4.0 * self.beta * wk)
            .collect()
    }

    pub fn to_matrix(&self, w: &[f64]) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for (&(i, j), &wk) in self.edges.iter().zip(w) {
            a[[i, j]] = wk;
            a[[j, i]] = wk;
        }
        a
    }
}

fn project(w: &[f64], g: &[f64], step: f64) -> Vec<f64> {
    w.iter().zip(g).map(|(a, b)| (a - step * b).max(0.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves for the MAP adjacency. Non-convergence within `max_iters` is reported through
/// [`MapGraph::converged`], not as an error.
pub fn solve_map_graph(z: &DistanceMatrix, config: &MapGraphConfig) -> Result<MapGraph> {
    config.validate()?;
    let zm = z.matrix();
    let n = zm.nrows();
    if !zm.is_square() {
        return Err(Error::Shape(format!("Z must be square, got {:?}", zm.dim())));
    }
    if !crate::linalg::is_symmetric(zm.view()) || zm.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("Z must be symmetric, finite and nonnegative".into()));
    }
    if zm.diag().iter().any(|&v| v != 0.0) {
        return Err(Error::InvalidArgument("Z must have a zero diagonal".into()));
    }
    if n <= 1 {
        return Ok(MapGraph {
            adjacency: Array2::zeros((n, n)),
            normalized: Array2::from_elem((n, n), 1.0),
            objective_trace: Vec::new(),
            iterations: 0,
            converged: true,
            z_scale: 1.0,
        });
    }

    let mut scale = 1.0;
    if config.normalize_z {
        let off: f64 = zm.sum() / (n * (n - 1)) as f64;
        if off > 0.0 {
            scale = 1.0 / off;
        }
    }
    let zs = zm.mapv(|v| v * scale);
    let problem = MapProblem::new(zs.view(), config.alpha, config.beta);

    let mut w = vec![1.0; problem.num_edges()];
    let mut f = problem.value(&w);
    let mut g = problem.gradient(&w);
    let mut trace = vec![f];
    let mut step = config.step_size;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let (w_new, f_new) = match config.step_rule {
            StepRule::Fixed => {
                let mut s = config.step_size;
                loop {
                    let cand = project(&w, &g, s);
                    let fc = problem.value(&cand);
                    if fc.is_finite() || s < 1e-300 {
                        break (cand, fc);
                    }
                    s *= 0.5;
                }
            }
            StepRule::Backtracking => {
                let mut s = step;
                loop {
                    let cand = project(&w, &g, s);
                    let fc = problem.value(&cand);
                    let diff: Vec<f64> = cand.iter().zip(&w).map(|(a, b)| a - b).collect();
                    let model = f + dot(&g, &diff) + dot(&diff, &diff) / (2.0 * s);
                    if fc.is_finite() && fc <= model && fc <= f {
                        break (cand, fc);
                    }
                    s *= 0.5;
                    if s < 1e-300 {
                        break (w.clone(), f);
                    }
                }
            }
        };
        if !f_new.is_finite() {
            break;
        }
        let g_new = problem.gradient(&w_new);
        if config.step_rule == StepRule::Backtracking {
            // Barzilai–Borwein trial step for the next iteration.
            let sw: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
            let sg: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let (ss, sy) = (dot(&sw, &sw), dot(&sw, &sg));
            step = if sy > 0.0 && ss > 0.0 {
                (ss / sy).clamp(1e-10, 1e10)
            } else {
                (step * 2.0).min(1e10)
            };
        }
        let rel = (f - f_new).abs() / f.abs().max(1.0);
        w = w_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        if rel < config.tol {
            converged = true;
            break;
        }
    }

    let adjacency = problem.to_matrix(&w);
    let normalized = normalize_adjacency(adjacency.view(), AdjacencyNorm::Symmetric);
    Ok(MapGraph {
        adjacency,
        normalized,
        objective_trace: trace,
        iterations,
        converged,
        z_scale: scale,
    })
}

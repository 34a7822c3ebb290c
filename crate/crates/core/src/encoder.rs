//! Mean-aggregator GNN encoder.
//!
//! Each layer computes
//!
//! ```text
//! h_v = ReLU( W · (h_v + Σ_{u ∈ N(v)} w_vu h_u) / (|N(v)| + 1) )
//! ```
//!
//! with `w_vu = 1` on static graphs and `w_vu = ψ^((t_v^max − t_uv)/Δ)` on
//! merged temporal graphs. The self term is never decayed and the
//! denominator is always `|N(v)| + 1`. Neighbor sums run in ascending node id
//! order so that results are reproducible bit for bit.

use crate::error::{input, Result};
use crate::graph::{MergedGraph, StaticGraph};
use crate::matrix::{axpy, Matrix};
use crate::scalar::Scalar;
use rand::Rng;

/// Per-edge aggregation weights aligned with `StaticGraph::neighbors`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborWeights<T> {
    weights: Vec<Vec<T>>,
}

impl<T: Scalar> NeighborWeights<T> {
    pub fn for_node(&self, v: usize) -> &[T] {
        &self.weights[v]
    }
}

/// Exponential time decay `ψ^(gap/Δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeDecay {
    pub psi: f64,
    /// Length of one snapshot interval in timestamp units.
    pub interval: f64,
}

impl TimeDecay {
    pub fn new(psi: f64, interval: f64) -> Result<Self> {
        if !(psi > 0.0 && psi <= 1.0) {
            return input(format!("decay factor must lie in (0, 1], got {psi}"));
        }
        if !(interval > 0.0 && interval.is_finite()) {
            return input(format!("decay interval must be positive, got {interval}"));
        }
        Ok(Self { psi, interval })
    }

    #[inline]
    pub fn weight(&self, gap: f64) -> f64 {
        self.psi.powf(gap / self.interval)
    }

    pub fn neighbor_weights<T: Scalar>(&self, g: &MergedGraph) -> NeighborWeights<T> {
        let n = g.graph().node_count();
        let weights = (0..n)
            .map(|v| match g.latest_interaction(v) {
                // isolated: nothing to decay
                None => Vec::new(),
                Some(t_max) => g
                    .neighbor_times(v)
                    .iter()
                    .map(|&t| T::of(self.weight(t_max - t)))
                    .collect(),
            })
            .collect();
        NeighborWeights { weights }
    }
}

/// A graph plus optional per-edge aggregation weights.
#[derive(Debug, Clone, Copy)]
pub struct Neighborhood<'a, T> {
    pub graph: &'a StaticGraph,
    pub weights: Option<&'a NeighborWeights<T>>,
}

impl<'a, T: Scalar> Neighborhood<'a, T> {
    pub fn plain(graph: &'a StaticGraph) -> Self {
        Self { graph, weights: None }
    }

    pub fn decayed(graph: &'a StaticGraph, weights: &'a NeighborWeights<T>) -> Self {
        Self { graph, weights: Some(weights) }
    }

    fn aggregate(&self, x: &Matrix<T>) -> Matrix<T> {
        let n = self.graph.node_count();
        let mut out = Matrix::zeros(n, x.cols());
        for v in 0..n {
            let nbrs = self.graph.neighbors(v);
            let acc = out.row_mut(v);
            acc.copy_from_slice(x.row(v));
            match self.weights {
                None => {
                    for &u in nbrs {
                        for (a, &b) in acc.iter_mut().zip(x.row(u)) {
                            *a += b;
                        }
                    }
                }
                Some(w) => {
                    for (&u, &wu) in nbrs.iter().zip(w.for_node(v)) {
                        axpy(wu, x.row(u), acc);
                    }
                }
            }
            let denom = T::of_usize(nbrs.len() + 1);
            for a in acc.iter_mut() {
                *a /= denom;
            }
        }
        out
    }

    /// Adjoint of `aggregate`.
    fn aggregate_adjoint(&self, d_agg: &Matrix<T>) -> Matrix<T> {
        let n = self.graph.node_count();
        let mut dx = Matrix::zeros(n, d_agg.cols());
        for v in 0..n {
            let nbrs = self.graph.neighbors(v);
            let scale = T::one() / T::of_usize(nbrs.len() + 1);
            let g = d_agg.row(v);
            axpy(scale, g, dx.row_mut(v));
            for (i, &u) in nbrs.iter().enumerate() {
                let w = self.weights.map_or(T::one(), |w| w.for_node(v)[i]);
                axpy(scale * w, g, dx.row_mut(u));
            }
        }
        dx
    }
}

/// Stack of layer weights; layer `l` maps dimension `in_l` to `out_l`
/// and is stored as an `out_l × in_l` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub layers: Vec<Matrix<T>>,
    /// Skip the ReLU on the last layer.
    pub linear_output: bool,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    aggregates: Vec<Matrix<T>>,
    pre_activations: Vec<Matrix<T>>,
}

impl<T: Scalar> Encoder<T> {
    /// Uniform `±1/√fan_in` initialization.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, embed_dim: usize, depth: usize, rng: &mut R) -> Self {
        let layers = (0..depth.max(1))
            .map(|l| {
                let fan_in = if l == 0 { input_dim } else { embed_dim };
                uniform_init(embed_dim, fan_in, rng)
            })
            .collect();
        Self { layers, linear_output: false }
    }

    pub fn with_linear_output(mut self, linear: bool) -> Self {
        self.linear_output = linear;
        self
    }

    fn is_linear(&self, layer: usize, depth: usize) -> bool {
        self.linear_output && layer + 1 == depth
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Matrix::cols)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Matrix::rows)
    }

    fn check_shapes(&self, x: &Matrix<T>, n: usize) -> Result<()> {
        if x.rows() != n {
            return input(format!("feature rows {} differ from node count {n}", x.rows()));
        }
        if x.cols() != self.input_dim() {
            return input(format!("feature dim {} differs from encoder input dim {}", x.cols(), self.input_dim()));
        }
        for w in self.layers.windows(2) {
            if w[1].cols() != w[0].rows() {
                return input("encoder layer shapes do not chain");
            }
        }
        Ok(())
    }

    pub fn forward(&self, nb: Neighborhood<'_, T>, x: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_shapes(x, nb.graph.node_count())?;
        let mut aggregates = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let depth = self.layers.len();
        for (l, w) in self.layers.iter().enumerate() {
            let agg = nb.aggregate(&h);
            let z = agg.matmul(&w.transpose());
            h = if self.is_linear(l, depth) { z.clone() } else { z.map(relu) };
            aggregates.push(agg);
            pre_activations.push(z);
        }
        Ok((h, ForwardCache { aggregates, pre_activations }))
    }

    pub fn encode(&self, nb: Neighborhood<'_, T>, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.forward(nb, x).map(|(h, _)| h)
    }

    /// `encode` on a merged graph with time-decayed neighbor weights.
    pub fn encode_temporal(&self, g: &MergedGraph, decay: TimeDecay, x: &Matrix<T>) -> Result<Matrix<T>> {
        let w = decay.neighbor_weights(g);
        self.encode(Neighborhood::decayed(g.graph(), &w), x)
    }

    /// Gradients of a scalar loss w.r.t. each layer and the input, given
    /// `d_out = ∂loss/∂H`. ReLU's subgradient at 0 is taken as 0.
    pub fn backward(&self, nb: Neighborhood<'_, T>, cache: &ForwardCache<T>, d_out: &Matrix<T>) -> (Vec<Matrix<T>>, Matrix<T>) {
        let mut d_layers: Vec<Matrix<T>> = self.layers.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
        let mut d_h = d_out.clone();
        let depth = self.layers.len();
        for l in (0..depth).rev() {
            let linear = self.is_linear(l, depth);
            let z = &cache.pre_activations[l];
            let agg = &cache.aggregates[l];
            let w = &self.layers[l];
            let mut d_agg = Matrix::zeros(agg.rows(), agg.cols());
            for v in 0..z.rows() {
                let dz: Vec<T> = d_h.row(v).iter().zip(z.row(v)).map(|(&g, &zi)| if linear || zi > T::zero() { g } else { T::zero() }).collect();
                let dw = &mut d_layers[l];
                for (o, &dzo) in dz.iter().enumerate() {
                    if dzo != T::zero() {
                        axpy(dzo, agg.row(v), dw.row_mut(o));
                    }
                }
                d_agg.row_mut(v).copy_from_slice(&w.matvec_t(&dz));
            }
            d_h = nb.aggregate_adjoint(&d_agg);
        }
        (d_layers, d_h)
    }
}

#[inline]
fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub(crate) fn uniform_init<T: Scalar, R: Rng + ?Sized>(rows: usize, fan_in: usize, rng: &mut R) -> Matrix<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Matrix::from_fn(rows, fan_in, |_, _| T::of(rng.gen_range(-bound..bound)))
}

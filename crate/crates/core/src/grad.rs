//! Exact gradients of the training objective, a central-difference oracle,
//! and Adam with L2 weight decay.
//!
//! The computation graph is fixed: features → encoder → {H, H̃} → losses.
//! Cluster centroids, previous-span embeddings and their corrupted versions
//! enter as constants.

use crate::contrastive::{
    community_loss_impl, feature_loss_impl, homophily_loss_impl, temporal_loss_impl, CommunitySamples,
    FeatureSamples, GradSink, HomophilySamples, LossGradients, LossParts, LossWeights,
};
use crate::encoder::{uniform_init, Encoder, Neighborhood};
use crate::error::{input, CgcError, Result};
use crate::matrix::{axpy, Matrix};
use crate::scalar::Scalar;
use rand::Rng;

/// Everything the optimizer updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    pub encoder: Encoder<T>,
    /// Bilinear critic `W_F`, `embed_dim × feature_dim`.
    pub critic: Matrix<T>,
    /// Present when input features are learnable.
    pub features: Option<Matrix<T>>,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn init<R: Rng + ?Sized>(
        feature_dim: usize,
        embed_dim: usize,
        depth: usize,
        learnable_features: Option<Matrix<T>>,
        rng: &mut R,
    ) -> Self {
        let encoder = Encoder::init(feature_dim, embed_dim, depth, rng);
        let critic = uniform_init(embed_dim, feature_dim, rng);
        Self { encoder, critic, features: learnable_features }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix<T>| Matrix::zeros(m.rows(), m.cols());
        Self {
            encoder: Encoder { layers: self.encoder.layers.iter().map(z).collect(), linear_output: self.encoder.linear_output },
            critic: z(&self.critic),
            features: self.features.as_ref().map(z),
        }
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out: Vec<(String, &Matrix<T>)> =
            self.encoder.layers.iter().enumerate().map(|(i, w)| (format!("encoder.{i}"), w)).collect();
        out.push(("critic".into(), &self.critic));
        if let Some(f) = &self.features {
            out.push(("features".into(), f));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out: Vec<(String, &mut Matrix<T>)> =
            self.encoder.layers.iter_mut().enumerate().map(|(i, w)| (format!("encoder.{i}"), w)).collect();
        out.push(("critic".into(), &mut self.critic));
        if let Some(f) = &mut self.features {
            out.push(("features".into(), f));
        }
        out
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    /// Largest `|a − b| / max(|a|, |b|, floor)` over all scalars.
    pub fn max_relative_error(&self, other: &Self, floor: T) -> T {
        let mut worst = T::zero();
        for ((_, a), (_, b)) in self.tensors().into_iter().zip(other.tensors()) {
            for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
                let denom = x.abs().max(y.abs()).max(floor);
                worst = worst.max((x - y).abs() / denom);
            }
        }
        worst
    }
}

/// Temporal contrast inputs, all treated as constants.
#[derive(Debug, Clone, Copy)]
pub struct TemporalTerm<'a, T> {
    pub previous: &'a Matrix<T>,
    pub corrupted_previous: &'a [Matrix<T>],
}

/// Data the objective depends on besides the parameters.
#[derive(Debug, Clone)]
pub struct ObjectiveInputs<'a, T> {
    pub neighborhood: Neighborhood<'a, T>,
    /// Used when the parameter set carries no learnable features.
    pub fixed_features: Option<&'a Matrix<T>>,
    pub centroids: Vec<&'a Matrix<T>>,
    pub temperature: T,
    pub weights: LossWeights,
    pub temporal: Option<TemporalTerm<'a, T>>,
}

/// All random draws of one epoch, recorded so the objective can be replayed.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSamples {
    /// Row permutation applied to the features to produce `H̃`.
    pub corruption: Vec<usize>,
    pub features: FeatureSamples,
    pub homophily: HomophilySamples,
    pub community: CommunitySamples,
}

fn feature_source<'a, T: Scalar>(inputs: &'a ObjectiveInputs<'a, T>, params: &'a ParameterSet<T>) -> Result<&'a Matrix<T>> {
    match (&params.features, inputs.fixed_features) {
        (Some(f), _) => Ok(f),
        (None, Some(f)) => Ok(f),
        (None, None) => input("no input features: neither learnable nor fixed"),
    }
}

fn sink<'a, T: Scalar>(grads: &'a mut LossGradients<T>, weight: f64) -> Option<GradSink<'a, T>> {
    (weight != 0.0).then(|| GradSink { grads, scale: T::of(weight) })
}

/// Loss terms without gradients.
pub fn evaluate<T: Scalar>(inputs: &ObjectiveInputs<'_, T>, params: &ParameterSet<T>, samples: &EpochSamples) -> Result<LossParts> {
    run(inputs, params, samples, false).map(|(parts, _)| parts)
}

/// Loss terms and exact gradients of the weighted total.
pub fn backward<T: Scalar>(
    inputs: &ObjectiveInputs<'_, T>,
    params: &ParameterSet<T>,
    samples: &EpochSamples,
) -> Result<(LossParts, ParameterSet<T>)> {
    let (parts, grads) = run(inputs, params, samples, true)?;
    let grads = grads.expect("gradients requested");
    for (name, g) in grads.tensors() {
        if !g.is_finite() {
            return Err(CgcError::NonFiniteGradient { param: name });
        }
    }
    Ok((parts, grads))
}

fn run<T: Scalar>(
    inputs: &ObjectiveInputs<'_, T>,
    params: &ParameterSet<T>,
    samples: &EpochSamples,
    want_grads: bool,
) -> Result<(LossParts, Option<ParameterSet<T>>)> {
    let x = feature_source(inputs, params)?;
    let nb = inputs.neighborhood;
    let n = nb.graph.node_count();
    if samples.corruption.len() != n {
        return input("corruption permutation length differs from node count");
    }
    let tau = inputs.temperature;
    let w = inputs.weights;

    let (h, cache) = params.encoder.forward(nb, x)?;
    let x_corrupt = x.permute_rows(&samples.corruption);
    let (h_corrupt, cache_corrupt) = params.encoder.forward(nb, &x_corrupt)?;

    let mut lg = LossGradients::zeros(n, h.cols(), x.cols());
    let mut parts = LossParts::default();
    macro_rules! grad_sink {
        ($weight:expr) => {
            if want_grads {
                sink(&mut lg, $weight)
            } else {
                None
            }
        };
    }
    parts.features = feature_loss_impl(&h, x, &params.critic, tau, &samples.features, grad_sink!(w.features)).as_f64();
    parts.homophily = homophily_loss_impl(&h, &h_corrupt, tau, &samples.homophily, grad_sink!(w.homophily)).as_f64();
    parts.community = community_loss_impl(&h, &inputs.centroids, tau, &samples.community, grad_sink!(w.community)).as_f64();
    if let Some(t) = inputs.temporal {
        parts.temporal =
            Some(temporal_loss_impl(&h, t.previous, t.corrupted_previous, tau, grad_sink!(w.temporal)).as_f64());
    }

    if !want_grads {
        return Ok((parts, None));
    }
    let mut grads = params.zeros_like();
    let (d_layers, d_x) = params.encoder.backward(nb, &cache, &lg.embeddings);
    let (d_layers_c, d_x_corrupt) = params.encoder.backward(nb, &cache_corrupt, &lg.corrupted_embeddings);
    for ((g, a), b) in grads.encoder.layers.iter_mut().zip(&d_layers).zip(&d_layers_c) {
        g.add_assign(a);
        g.add_assign(b);
    }
    grads.critic = lg.critic;
    if let Some(df) = grads.features.as_mut() {
        df.add_assign(&d_x);
        df.add_assign(&lg.features);
        // x_corrupt[i] = x[perm[i]]
        for (i, &p) in samples.corruption.iter().enumerate() {
            axpy(T::one(), d_x_corrupt.row(i), df.row_mut(p));
        }
    }
    Ok((parts, Some(grads)))
}

/// Central differences `(f(θ+ε) − f(θ−ε)) / 2ε`, one scalar at a time.
pub fn finite_diff<T: Scalar>(mut loss: impl FnMut(&ParameterSet<T>) -> T, params: &ParameterSet<T>, eps: T) -> ParameterSet<T> {
    let mut grads = params.zeros_like();
    let mut probe = params.clone();
    let two_eps = eps + eps;
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    for (t, name) in names.iter().enumerate() {
        let len = params.tensors()[t].1.as_slice().len();
        for i in 0..len {
            let orig = params.tensors()[t].1.as_slice()[i];
            set_scalar(&mut probe, t, i, orig + eps);
            let up = loss(&probe);
            set_scalar(&mut probe, t, i, orig - eps);
            let down = loss(&probe);
            set_scalar(&mut probe, t, i, orig);
            let g = grads.tensors_mut().into_iter().nth(t).expect("same layout");
            debug_assert_eq!(&g.0, name);
            g.1.as_mut_slice()[i] = (up - down) / two_eps;
        }
    }
    grads
}

fn set_scalar<T: Scalar>(p: &mut ParameterSet<T>, tensor: usize, i: usize, value: T) {
    let (_, m) = p.tensors_mut().into_iter().nth(tensor).expect("tensor index in range");
    m.as_mut_slice()[i] = value;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient folded into the gradient.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParameterSet<T>) -> Self {
        let z: Vec<Matrix<T>> = params.tensors().iter().map(|(_, m)| Matrix::zeros(m.rows(), m.cols())).collect();
        Self { config, step: 0, first: z.clone(), second: z }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParameterSet<T>, grads: &ParameterSet<T>) -> Result<()> {
        let grad_tensors = grads.tensors();
        let mut param_tensors = params.tensors_mut();
        if grad_tensors.len() != param_tensors.len() || param_tensors.len() != self.first.len() {
            return input("gradient layout does not match parameters");
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bias1 = T::one() - T::of(c.beta1.powi(self.step as i32));
        let bias2 = T::one() - T::of(c.beta2.powi(self.step as i32));
        let (lr, eps, wd) = (T::of(c.lr), T::of(c.eps), T::of(c.weight_decay));
        for (t, ((_, p), (_, g))) in param_tensors.iter_mut().zip(&grad_tensors).enumerate() {
            if p.shape() != g.shape() {
                return input("gradient shape does not match parameter");
            }
            let (m, v) = (&mut self.first[t], &mut self.second[t]);
            for (((pi, &gi), mi), vi) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                let gi = gi + wd * *pi;
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

//! Positive/negative sample construction and the InfoNCE loss family.
//!
//! Every loss is a sum over anchors of
//! `−log( e^{s⁺} / (e^{s⁺} + Σ e^{s⁻}) )` where the scores `s` are critic
//! values divided by a temperature:
//!
//! | loss        | anchor | positive                    | negatives                           | critic     |
//! |-------------|--------|-----------------------------|-------------------------------------|------------|
//! | features    | `h_u`  | `f_u`                       | `f_v`, `v ≠ u`, with replacement    | `hᵀ W_F f` |
//! | homophily   | `h_u`  | embedding of a neighbor     | rows of the corrupted embeddings    | `h · h'`   |
//! | community   | `h_u`  | strongest centroid          | other centroids, no replacement     | `h · c`    |
//! | temporal    | `h_u`  | `h_u` at the previous span  | `h̃_u` from corrupted previous spans | `h · h'`   |
//!
//! Sampling is separated from evaluation: the `sample_*` functions record
//! indices, and the loss functions replay them. This is what makes the
//! objective a deterministic function of the parameters for gradient checks.

use crate::clustering::MultiLevelClustering;
use crate::error::{input, Result};
use crate::graph::StaticGraph;
use crate::matrix::{axpy, dot, Matrix};
use crate::scalar::Scalar;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// `−log softmax₀(s⁺, s⁻…)`, evaluated with max subtraction.
pub fn infonce_term<T: Scalar>(positive: T, negatives: &[T]) -> T {
    let m = negatives.iter().copied().fold(positive, T::max);
    let z = (positive - m).exp() + negatives.iter().map(|&s| (s - m).exp()).sum::<T>();
    z.ln() + (m - positive)
}

/// Loss plus `∂/∂s⁺` and `∂/∂s⁻ᵢ` (written into `d_neg`).
fn infonce_with_grad<T: Scalar>(positive: T, negatives: &[T], d_neg: &mut Vec<T>) -> (T, T) {
    let m = negatives.iter().copied().fold(positive, T::max);
    let e0 = (positive - m).exp();
    d_neg.clear();
    d_neg.extend(negatives.iter().map(|&s| (s - m).exp()));
    let z = e0 + d_neg.iter().copied().sum::<T>();
    for d in d_neg.iter_mut() {
        *d /= z;
    }
    (z.ln() + (m - positive), e0 / z - T::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub features: f64,
    pub homophily: f64,
    pub community: f64,
    pub temporal: f64,
}

impl LossWeights {
    pub fn new(features: f64, homophily: f64, community: f64, temporal: f64) -> Result<Self> {
        let w = Self { features, homophily, community, temporal };
        if [features, homophily, community, temporal].iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return input("loss weights must be finite and non-negative");
        }
        Ok(w)
    }

    pub fn static_default() -> Self {
        Self { features: 1.0, homophily: 1.0, community: 1.0, temporal: 0.0 }
    }

    pub fn temporal_default() -> Self {
        Self { features: 0.0, homophily: 1.0, community: 0.2, temporal: 0.2 }
    }
}

/// Per-term loss values; `temporal` is `None` when the term is inactive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub features: f64,
    pub homophily: f64,
    pub community: f64,
    pub temporal: Option<f64>,
}

impl LossParts {
    pub fn total(&self, w: &LossWeights) -> f64 {
        total_loss(self, w)
    }
}

/// Weighted combination; an absent temporal term contributes nothing.
pub fn total_loss(parts: &LossParts, w: &LossWeights) -> f64 {
    let mut t = w.features * parts.features + w.homophily * parts.homophily + w.community * parts.community;
    if let Some(lt) = parts.temporal {
        t += w.temporal * lt;
    }
    t
}

/// Accumulator for `∂loss/∂·` of every quantity the losses touch directly.
#[derive(Debug, Clone)]
pub struct LossGradients<T> {
    pub embeddings: Matrix<T>,
    pub corrupted_embeddings: Matrix<T>,
    /// Direct dependence of the feature loss on `F` (not through the encoder).
    pub features: Matrix<T>,
    pub critic: Matrix<T>,
}

impl<T: Scalar> LossGradients<T> {
    pub fn zeros(n: usize, embed_dim: usize, feature_dim: usize) -> Self {
        Self {
            embeddings: Matrix::zeros(n, embed_dim),
            corrupted_embeddings: Matrix::zeros(n, embed_dim),
            features: Matrix::zeros(n, feature_dim),
            critic: Matrix::zeros(embed_dim, feature_dim),
        }
    }
}

/// Where a loss should add its scaled gradient, if anywhere.
pub struct GradSink<'a, T> {
    pub grads: &'a mut LossGradients<T>,
    pub scale: T,
}

// ---------------------------------------------------------------------------
// feature loss

/// Negative node indices per anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSamples {
    pub negatives: Vec<Vec<usize>>,
}

/// `r` nodes per anchor drawn uniformly with replacement from `V \ {u}`.
pub fn sample_feature_negatives<R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> FeatureSamples {
    let negatives = (0..n)
        .map(|u| {
            if n < 2 {
                return Vec::new();
            }
            (0..r)
                .map(|_| {
                    let v = rng.gen_range(0..n - 1);
                    if v >= u {
                        v + 1
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    FeatureSamples { negatives }
}

/// Bilinear-critic loss between embeddings and input features.
pub fn loss_features<T: Scalar>(
    h: &Matrix<T>,
    f: &Matrix<T>,
    critic: &Matrix<T>,
    temperature: T,
    samples: &FeatureSamples,
) -> T {
    feature_loss_impl(h, f, critic, temperature, samples, None)
}

pub(crate) fn feature_loss_impl<T: Scalar>(
    h: &Matrix<T>,
    f: &Matrix<T>,
    critic: &Matrix<T>,
    temperature: T,
    samples: &FeatureSamples,
    mut sink: Option<GradSink<'_, T>>,
) -> T {
    // row v of `proj` is W_F f_v
    let proj = f.matmul(&critic.transpose());
    let mut d_proj = sink.as_ref().map(|_| Matrix::zeros(proj.rows(), proj.cols()));
    let mut total = T::zero();
    let mut negs = Vec::new();
    let mut d_neg = Vec::new();
    for (u, neg_idx) in samples.negatives.iter().enumerate() {
        let hu = h.row(u);
        let pos = dot(hu, proj.row(u)) / temperature;
        negs.clear();
        negs.extend(neg_idx.iter().map(|&v| dot(hu, proj.row(v)) / temperature));
        let (loss, d_pos) = infonce_with_grad(pos, &negs, &mut d_neg);
        total += loss;
        if let (Some(sink), Some(dp)) = (sink.as_mut(), d_proj.as_mut()) {
            let c = sink.scale / temperature;
            let dh = sink.grads.embeddings.row_mut(u);
            axpy(c * d_pos, proj.row(u), dh);
            for (&v, &dn) in neg_idx.iter().zip(&d_neg) {
                axpy(c * dn, proj.row(v), dh);
            }
            axpy(c * d_pos, hu, dp.row_mut(u));
            for (&v, &dn) in neg_idx.iter().zip(&d_neg) {
                axpy(c * dn, hu, dp.row_mut(v));
            }
        }
    }
    if let (Some(sink), Some(dp)) = (sink, d_proj) {
        // proj = F W_Fᵀ  ⇒  ∂W_F = dprojᵀ F,  ∂F = dproj W_F
        sink.grads.critic.add_assign(&dp.transpose().matmul(f));
        sink.grads.features.add_assign(&dp.matmul(critic));
    }
    total
}

// ---------------------------------------------------------------------------
// homophily loss

/// Draws positive neighbors, favoring neighbors that close a triangle.
///
/// Each triangle neighbor is picked with probability `δ/|N_Δ(u)|` and each
/// other neighbor with `(1−δ)/|N(u) \ N_Δ(u)|`. When either set is empty
/// its mass moves to the other, so the draw is uniform over what exists.
#[derive(Debug, Clone)]
pub struct HomophilySampler {
    triangle: Vec<Vec<usize>>,
    other: Vec<Vec<usize>>,
    delta: f64,
}

impl HomophilySampler {
    pub fn new(g: &StaticGraph, delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return input(format!("triangle weight δ must lie in [0, 1], got {delta}"));
        }
        let n = g.node_count();
        let mut triangle = Vec::with_capacity(n);
        let mut other = Vec::with_capacity(n);
        for u in 0..n {
            let tri = g.triangle_neighbors(u);
            let rest = g.neighbors(u).iter().copied().filter(|v| tri.binary_search(v).is_err()).collect();
            triangle.push(tri);
            other.push(rest);
        }
        Ok(Self { triangle, other, delta })
    }

    pub fn triangle_neighbors(&self, u: usize) -> &[usize] {
        &self.triangle[u]
    }

    /// `None` for isolated nodes.
    pub fn sample<R: Rng + ?Sized>(&self, u: usize, rng: &mut R) -> Option<usize> {
        let (tri, rest) = (&self.triangle[u], &self.other[u]);
        let pool = match (tri.is_empty(), rest.is_empty()) {
            (true, true) => return None,
            (false, true) => tri,
            (true, false) => rest,
            (false, false) => {
                if rng.gen::<f64>() < self.delta {
                    tri
                } else {
                    rest
                }
            }
        };
        Some(pool[rng.gen_range(0..pool.len())])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomophilyAnchor {
    pub node: usize,
    pub positive: usize,
    /// Rows of the corrupted embedding matrix.
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomophilySamples {
    pub anchors: Vec<HomophilyAnchor>,
}

/// Isolated nodes are not anchors. Negative rows are uniform with replacement.
pub fn sample_homophily<R: Rng + ?Sized>(sampler: &HomophilySampler, r: usize, rng: &mut R) -> HomophilySamples {
    let n = sampler.triangle.len();
    let anchors = (0..n)
        .filter_map(|u| {
            let positive = sampler.sample(u, rng)?;
            let negatives = (0..r).map(|_| rng.gen_range(0..n)).collect();
            Some(HomophilyAnchor { node: u, positive, negatives })
        })
        .collect();
    HomophilySamples { anchors }
}

/// Inner-product loss contrasting neighbors against corrupted embeddings.
pub fn loss_homophily<T: Scalar>(
    h: &Matrix<T>,
    h_corrupt: &Matrix<T>,
    temperature: T,
    samples: &HomophilySamples,
) -> T {
    homophily_loss_impl(h, h_corrupt, temperature, samples, None)
}

pub(crate) fn homophily_loss_impl<T: Scalar>(
    h: &Matrix<T>,
    h_corrupt: &Matrix<T>,
    temperature: T,
    samples: &HomophilySamples,
    mut sink: Option<GradSink<'_, T>>,
) -> T {
    let mut total = T::zero();
    let mut negs = Vec::new();
    let mut d_neg = Vec::new();
    for a in &samples.anchors {
        let hu = h.row(a.node);
        let pos = dot(hu, h.row(a.positive)) / temperature;
        negs.clear();
        negs.extend(a.negatives.iter().map(|&v| dot(hu, h_corrupt.row(v)) / temperature));
        let (loss, d_pos) = infonce_with_grad(pos, &negs, &mut d_neg);
        total += loss;
        if let Some(sink) = sink.as_mut() {
            let c = sink.scale / temperature;
            let mut dh = vec![T::zero(); hu.len()];
            axpy(c * d_pos, h.row(a.positive), &mut dh);
            for (&v, &dn) in a.negatives.iter().zip(&d_neg) {
                axpy(c * dn, h_corrupt.row(v), &mut dh);
                axpy(c * dn, hu, sink.grads.corrupted_embeddings.row_mut(v));
            }
            axpy(c * d_pos, hu, sink.grads.embeddings.row_mut(a.positive));
            axpy(T::one(), &dh, sink.grads.embeddings.row_mut(a.node));
        }
    }
    total
}

// ---------------------------------------------------------------------------
// community loss

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityAnchor {
    pub positive: usize,
    pub negatives: Vec<usize>,
}

/// `levels[ℓ][u]` holds node `u`'s centroid samples at level `ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunitySamples {
    pub levels: Vec<Vec<CommunityAnchor>>,
}

/// Positive: the centroid with the largest membership (lowest index on
/// ties). Negatives: `r_ℓ` other centroids without replacement, clamped to
/// `k_ℓ − 1`.
pub fn sample_community<T: Scalar, R: Rng + ?Sized>(
    clustering: &MultiLevelClustering<T>,
    negatives_per_level: &[usize],
    rng: &mut R,
) -> Result<CommunitySamples> {
    if negatives_per_level.len() != clustering.levels.len() {
        return input("one negative count per clustering level is required");
    }
    let mut levels = Vec::with_capacity(clustering.levels.len());
    for (level, &r) in clustering.levels.iter().zip(negatives_per_level) {
        let k = level.k;
        let r = if r > k.saturating_sub(1) {
            log::warn!("r = {r} exceeds k − 1 = {} at level k = {k}; clamping", k.saturating_sub(1));
            k.saturating_sub(1)
        } else {
            r
        };
        let anchors = level
            .strongest_clusters()
            .into_iter()
            .map(|positive| {
                let negatives = index::sample(rng, k - 1, r)
                    .into_iter()
                    .map(|j| if j >= positive { j + 1 } else { j })
                    .collect();
                CommunityAnchor { positive, negatives }
            })
            .collect();
        levels.push(anchors);
    }
    Ok(CommunitySamples { levels })
}

/// Per-node average over levels of the centroid-contrast term.
pub fn loss_community<T: Scalar>(
    h: &Matrix<T>,
    centroids: &[&Matrix<T>],
    temperature: T,
    samples: &CommunitySamples,
) -> T {
    community_loss_impl(h, centroids, temperature, samples, None)
}

pub(crate) fn community_loss_impl<T: Scalar>(
    h: &Matrix<T>,
    centroids: &[&Matrix<T>],
    temperature: T,
    samples: &CommunitySamples,
    mut sink: Option<GradSink<'_, T>>,
) -> T {
    let levels = samples.levels.len();
    if levels == 0 {
        return T::zero();
    }
    let inv_l = T::one() / T::of_usize(levels);
    let mut total = T::zero();
    let mut negs = Vec::new();
    let mut d_neg = Vec::new();
    for (c, anchors) in centroids.iter().zip(&samples.levels) {
        let mut level_total = T::zero();
        for (u, a) in anchors.iter().enumerate() {
            let hu = h.row(u);
            let pos = dot(hu, c.row(a.positive)) / temperature;
            negs.clear();
            negs.extend(a.negatives.iter().map(|&j| dot(hu, c.row(j)) / temperature));
            let (loss, d_pos) = infonce_with_grad(pos, &negs, &mut d_neg);
            level_total += loss;
            if let Some(sink) = sink.as_mut() {
                let s = sink.scale * inv_l / temperature;
                let dh = sink.grads.embeddings.row_mut(u);
                axpy(s * d_pos, c.row(a.positive), dh);
                for (&j, &dn) in a.negatives.iter().zip(&d_neg) {
                    axpy(s * dn, c.row(j), dh);
                }
            }
        }
        total += level_total * inv_l;
    }
    total
}

// ---------------------------------------------------------------------------
// temporal loss

/// Contrasts current embeddings with the previous span's (positive) and with
/// embeddings of the previous segment graph under corrupted features
/// (negatives, one matrix per corruption). All reference embeddings are
/// constants.
pub fn loss_temporal<T: Scalar>(
    h: &Matrix<T>,
    previous: &Matrix<T>,
    corrupted_previous: &[Matrix<T>],
    temperature: T,
) -> T {
    temporal_loss_impl(h, previous, corrupted_previous, temperature, None)
}

pub(crate) fn temporal_loss_impl<T: Scalar>(
    h: &Matrix<T>,
    previous: &Matrix<T>,
    corrupted_previous: &[Matrix<T>],
    temperature: T,
    mut sink: Option<GradSink<'_, T>>,
) -> T {
    let mut total = T::zero();
    let mut negs = Vec::new();
    let mut d_neg = Vec::new();
    for u in 0..h.rows() {
        let hu = h.row(u);
        let pos = dot(hu, previous.row(u)) / temperature;
        negs.clear();
        negs.extend(corrupted_previous.iter().map(|m| dot(hu, m.row(u)) / temperature));
        let (loss, d_pos) = infonce_with_grad(pos, &negs, &mut d_neg);
        total += loss;
        if let Some(sink) = sink.as_mut() {
            let c = sink.scale / temperature;
            let dh = sink.grads.embeddings.row_mut(u);
            axpy(c * d_pos, previous.row(u), dh);
            for (m, &dn) in corrupted_previous.iter().zip(&d_neg) {
                axpy(c * dn, m.row(u), dh);
            }
        }
    }
    total
}

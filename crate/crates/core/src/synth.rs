//! Synthetic fixtures: planted-partition static graphs with Gaussian feature
//! blobs, and two temporal case-study streams.
//!
//! * **traveling**: two groups; at span 3 half of group 0 joins group 1,
//!   stays through span 5 and returns at span 6.
//! * **reorg**: two groups for spans 0–2, then a fixed random regrouping of
//!   all nodes into three communities from span 3 on.
//!
//! Span `s` covers timestamps `[s, s + 1)`; each edge gets a timestamp drawn
//! uniformly from its span.

use crate::error::{input, Result};
use crate::features::FeatureMatrix;
use crate::graph::{Snapshot, StaticGraph, TemporalGraphStream};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Span at which both temporal scenarios change structure.
pub const CHANGE_SPAN: usize = 3;
/// Span at which travelers return in the traveling scenario.
pub const RETURN_SPAN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Traveling,
    Reorg,
    StaticSbm,
}

impl std::str::FromStr for Scenario {
    type Err = crate::error::CgcError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traveling" => Ok(Self::Traveling),
            "reorg" => Ok(Self::Reorg),
            "static-sbm" | "sbm" => Ok(Self::StaticSbm),
            other => input(format!("unknown scenario `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub scenario: Scenario,
    pub n_per_group: usize,
    /// Number of planted blocks (static SBM only).
    pub groups: usize,
    pub spans: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub feature_dim: usize,
    /// Distance between feature-blob means, in units of the blob std-dev.
    pub separation: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn traveling(seed: u64) -> Self {
        Self { scenario: Scenario::Traveling, spans: 9, ..Self::base(seed) }
    }

    pub fn reorg(seed: u64) -> Self {
        Self { scenario: Scenario::Reorg, spans: 6, ..Self::base(seed) }
    }

    /// Two blocks of 100 with `p_in = 0.1`, `p_out = 0.01` and 3σ blobs.
    pub fn sbm(seed: u64) -> Self {
        Self {
            scenario: Scenario::StaticSbm,
            n_per_group: 100,
            intra_p: 0.1,
            inter_p: 0.01,
            spans: 1,
            ..Self::base(seed)
        }
    }

    fn base(seed: u64) -> Self {
        Self {
            scenario: Scenario::Traveling,
            n_per_group: 50,
            groups: 2,
            spans: 9,
            intra_p: 0.15,
            inter_p: 0.01,
            feature_dim: 16,
            separation: 3.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        for p in [self.intra_p, self.inter_p] {
            if !(0.0..=1.0).contains(&p) {
                return input(format!("edge probability {p} outside [0, 1]"));
            }
        }
        if self.spans == 0 || self.n_per_group == 0 {
            return input("spans and n_per_group must be positive");
        }
        Ok(())
    }
}

/// Per-span node labels; `labels[s][u]`.
pub type SpanLabels = Vec<Vec<usize>>;

fn planted_edges<R: Rng>(labels: &[usize], intra_p: f64, inter_p: f64, rng: &mut R) -> Vec<(usize, usize)> {
    let n = labels.len();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { intra_p } else { inter_p };
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

fn stream_from_labels<R: Rng>(spec: &SynthSpec, labels: &SpanLabels, rng: &mut R) -> Result<TemporalGraphStream> {
    let n = labels[0].len();
    let snapshots = labels
        .iter()
        .enumerate()
        .map(|(s, l)| {
            let edges = planted_edges(l, spec.intra_p, spec.inter_p, rng)
                .into_iter()
                .map(|(u, v)| (u, v, s as f64 + rng.gen::<f64>()))
                .collect();
            Snapshot::new(s, edges)
        })
        .collect();
    TemporalGraphStream::new(n, snapshots)
}

pub fn gen_traveling(spec: &SynthSpec) -> Result<(TemporalGraphStream, SpanLabels)> {
    spec.validate()?;
    if spec.spans < 7 {
        return input("the traveling scenario needs at least 7 spans");
    }
    let m = spec.n_per_group;
    let travelers = m / 2;
    let labels: SpanLabels = (0..spec.spans)
        .map(|s| {
            let away = (CHANGE_SPAN..RETURN_SPAN).contains(&s);
            (0..2 * m)
                .map(|u| if u >= m || (away && u < travelers) { 1 } else { 0 })
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((stream_from_labels(spec, &labels, &mut rng)?, labels))
}

pub fn gen_reorg(spec: &SynthSpec) -> Result<(TemporalGraphStream, SpanLabels)> {
    spec.validate()?;
    if spec.spans < 4 {
        return input("the reorganization scenario needs at least 4 spans");
    }
    let n = 2 * spec.n_per_group;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut regrouped = vec![0; n];
    for (rank, &u) in order.iter().enumerate() {
        regrouped[u] = rank * 3 / n;
    }
    let before: Vec<usize> = (0..n).map(|u| u / spec.n_per_group).collect();
    let labels: SpanLabels =
        (0..spec.spans).map(|s| if s < CHANGE_SPAN { before.clone() } else { regrouped.clone() }).collect();
    Ok((stream_from_labels(spec, &labels, &mut rng)?, labels))
}

/// Stochastic block model with one Gaussian feature blob per block. Blob
/// means sit on scaled coordinate axes so every pair is `separation` apart.
pub fn gen_sbm<T: Scalar>(spec: &SynthSpec) -> Result<(StaticGraph, Vec<usize>, FeatureMatrix<T>)> {
    spec.validate()?;
    let k = spec.groups;
    if k == 0 || spec.feature_dim < k {
        return input("static SBM needs 1 ≤ groups ≤ feature_dim");
    }
    let n = k * spec.n_per_group;
    let labels: Vec<usize> = (0..n).map(|u| u / spec.n_per_group).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let edges = planted_edges(&labels, spec.intra_p, spec.inter_p, &mut rng);
    let graph = StaticGraph::new(n, &edges)?;
    let offset = spec.separation / std::f64::consts::SQRT_2;
    let values = Matrix::from_fn(n, spec.feature_dim, |u, j| {
        let noise: f64 = rng.sample(StandardNormal);
        T::of(noise + if j == labels[u] { offset } else { 0.0 })
    });
    Ok((graph, labels, FeatureMatrix::fixed(values)?))
}

/// Newman modularity of a hard partition.
pub fn modularity(g: &StaticGraph, labels: &[usize]) -> f64 {
    let m = g.edge_count() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = labels.iter().copied().max().map_or(0, |x| x + 1);
    let mut internal = vec![0.0; k];
    let mut degree = vec![0.0; k];
    for &(u, v) in g.edges() {
        if labels[u] == labels[v] {
            internal[labels[u]] += 1.0;
        }
    }
    for u in 0..g.node_count() {
        degree[labels[u]] += g.degree(u) as f64;
    }
    (0..k).map(|c| internal[c] / m - (degree[c] / (2.0 * m)).powi(2)).sum()
}

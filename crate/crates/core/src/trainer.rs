//! Training loops: static contrastive clustering, stream segmentation and the
//! incremental temporal framework.

use crate::clustering::{kmeans, refine_levels, soft_membership, MultiLevelClustering};
use crate::contrastive::{
    sample_community, sample_feature_negatives, sample_homophily, HomophilySampler, LossParts, LossWeights,
};
use crate::encoder::{Neighborhood, NeighborWeights, TimeDecay};
use crate::error::{input, CgcError, Result};
use crate::eval::{clustering_metrics, link_score, rank_metrics, sample_negative_edges, weighted_mean, ClusteringScores, RankScores};
use crate::features::{corruption_permutation, svd_init, FeatureMatrix};
use crate::grad::{backward, Adam, AdamConfig, EpochSamples, ObjectiveInputs, ParameterSet, TemporalTerm};
use crate::graph::{MergedGraph, Snapshot, StaticGraph, TemporalGraphStream};
use crate::matrix::{dot, Matrix};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicBool, Ordering};

/// Epochs spanned by the convergence test.
pub const CONVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epoch: usize,
    /// Re-cluster every `refine_interval` epochs.
    pub refine_interval: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub temperature: f64,
    /// Probability mass on triangle neighbors when sampling homophily positives.
    pub delta: f64,
    pub psi: f64,
    /// Time units per decay step.
    pub decay_interval: f64,
    pub theta: f64,
    /// Level sizes are `k · m` for each multiplier `m`; the first must be 1.
    pub level_multipliers: Vec<usize>,
    pub feature_negatives: usize,
    pub homophily_negatives: usize,
    pub community_negatives: usize,
    pub temporal_negatives: usize,
    pub weights: LossWeights,
    pub tol: f64,
    pub seed: u64,
    pub embed_dim: usize,
    /// Width of SVD-initialized learnable features (capped at `n`).
    pub feature_dim: usize,
    pub layers: usize,
    pub kmeans_restarts: usize,
    pub membership_softness: f64,
    /// Drop the ReLU on the encoder's last layer.
    pub linear_output: bool,
    /// Re-initialize parameters (and learnable features) when a change point
    /// opens a new segment.
    pub reset_at_change_point: bool,
}

impl TrainConfig {
    pub fn static_default() -> Self {
        Self {
            max_epoch: 200,
            refine_interval: 2,
            lr: 0.001,
            weight_decay: 1e-4,
            temperature: 0.65,
            delta: 0.7,
            psi: 0.99,
            decay_interval: 1.0,
            theta: 0.3,
            level_multipliers: vec![1, 5, 25],
            feature_negatives: 30,
            homophily_negatives: 10,
            community_negatives: 30,
            temporal_negatives: 10,
            weights: LossWeights::static_default(),
            tol: 1e-3,
            seed: 0,
            embed_dim: 200,
            feature_dim: 128,
            layers: 1,
            kmeans_restarts: 10,
            membership_softness: 1.0,
            linear_output: false,
            reset_at_change_point: false,
        }
    }

    pub fn temporal_default() -> Self {
        Self {
            max_epoch: 50,
            lr: 0.005,
            embed_dim: 32,
            weights: LossWeights::temporal_default(),
            linear_output: true,
            reset_at_change_point: true,
            ..Self::static_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epoch == 0 || self.refine_interval == 0 {
            return input("max_epoch and refine_interval must be at least 1");
        }
        if self.theta.is_nan() {
            return input("theta must not be NaN");
        }
        if !(self.temperature > 0.0) || !(self.membership_softness > 0.0) {
            return input("temperature and membership softness must be positive");
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return input(format!("delta = {} outside [0, 1]", self.delta));
        }
        if self.level_multipliers.first() != Some(&1) || self.level_multipliers.contains(&0) {
            return input("level multipliers must start at 1 and be positive");
        }
        if self.embed_dim == 0 || self.layers == 0 || self.kmeans_restarts == 0 {
            return input("embed_dim, layers and kmeans_restarts must be positive");
        }
        TimeDecay::new(self.psi, self.decay_interval)?;
        LossWeights::new(self.weights.features, self.weights.homophily, self.weights.community, self.weights.temporal)?;
        Ok(())
    }

    pub fn levels(&self, k: usize) -> Vec<usize> {
        self.level_multipliers.iter().map(|m| k * m).collect()
    }

    fn decay(&self) -> TimeDecay {
        TimeDecay { psi: self.psi, interval: self.decay_interval }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub parts: LossParts,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct ClusteringOutput<T> {
    /// Level-1 soft memberships.
    pub membership: Matrix<T>,
    pub embeddings: Matrix<T>,
    pub centroids: Matrix<T>,
    pub assignments: Vec<usize>,
    pub losses: Vec<EpochLoss>,
    pub refinements: usize,
    pub converged: bool,
}

/// Graph view used during one training call.
struct Graph<'a, T> {
    graph: &'a StaticGraph,
    weights: Option<&'a NeighborWeights<T>>,
}

impl<'a, T: Scalar> Graph<'a, T> {
    fn neighborhood(&self) -> Neighborhood<'a, T> {
        Neighborhood { graph: self.graph, weights: self.weights }
    }
}

/// Temporal context: previous-span embeddings and the previous segment graph.
struct History<'a, T> {
    previous: &'a Matrix<T>,
    previous_graph: Graph<'a, T>,
}

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

fn clamp_community_negatives(r: usize, ks: &[usize]) -> Vec<usize> {
    ks.iter()
        .map(|&k| {
            let cap = k.saturating_sub(1);
            if r > cap && !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
                log::warn!("community negatives {r} exceed k − 1 = {cap} at level k = {k}; clamping");
            }
            r.min(cap)
        })
        .collect()
}

fn converged(totals: &[f64], tol: f64) -> bool {
    let e = totals.len();
    if e <= CONVERGENCE_WINDOW {
        return false;
    }
    let (now, then) = (totals[e - 1], totals[e - 1 - CONVERGENCE_WINDOW]);
    (now - then).abs() <= tol * then.abs().max(f64::MIN_POSITIVE)
}

fn train<T: Scalar, R: Rng>(
    params: &mut ParameterSet<T>,
    g: &Graph<'_, T>,
    fixed_features: Option<&Matrix<T>>,
    k: usize,
    cfg: &TrainConfig,
    history: Option<&History<'_, T>>,
    rng: &mut R,
) -> Result<ClusteringOutput<T>> {
    cfg.validate()?;
    let n = g.graph.node_count();
    let ks = cfg.levels(k);
    if ks.iter().any(|&kl| kl > n) {
        return input(format!("cluster levels {ks:?} exceed node count {n}"));
    }
    let r_levels = clamp_community_negatives(cfg.community_negatives, &ks);
    let sampler = HomophilySampler::new(g.graph, cfg.delta)?;
    let softness = T::of(cfg.membership_softness);
    let tau = T::of(cfg.temperature);
    let nb = g.neighborhood();
    let mut adam = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay), params);

    let mut clustering: Option<MultiLevelClustering<T>> = None;
    let mut losses = Vec::with_capacity(cfg.max_epoch);
    let mut totals = Vec::with_capacity(cfg.max_epoch);
    let mut refinements = 0;
    let mut is_converged = false;
    for epoch in 0..cfg.max_epoch {
        let x = params.features.as_ref().or(fixed_features).ok_or_else(|| CgcError::Input("no input features".into()))?;
        if epoch % cfg.refine_interval == 0 {
            let h = params.encoder.encode(nb, x)?;
            clustering = Some(refine_levels(&h, &ks, cfg.kmeans_restarts, softness, rng)?);
            refinements += 1;
        }
        let levels = clustering.as_ref().expect("refined at epoch 0");
        let samples = EpochSamples {
            corruption: corruption_permutation(n, rng),
            features: sample_feature_negatives(n, cfg.feature_negatives, rng),
            homophily: sample_homophily(&sampler, cfg.homophily_negatives, rng),
            community: sample_community(levels, &r_levels, rng)?,
        };
        let corrupted_previous = match history {
            Some(hist) if cfg.weights.temporal != 0.0 || cfg.temporal_negatives > 0 => (0..cfg.temporal_negatives)
                .map(|_| {
                    let perm = corruption_permutation(n, rng);
                    params.encoder.encode(hist.previous_graph.neighborhood(), &x.permute_rows(&perm))
                })
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        let inputs = ObjectiveInputs {
            neighborhood: nb,
            fixed_features,
            centroids: levels.levels.iter().map(|l| &l.centroids).collect(),
            temperature: tau,
            weights: cfg.weights,
            temporal: history.map(|hist| TemporalTerm { previous: hist.previous, corrupted_previous: &corrupted_previous }),
        };
        let (parts, grads) = backward(&inputs, params, &samples)?;
        let total = parts.total(&cfg.weights);
        if !total.is_finite() {
            return Err(CgcError::NonFiniteLoss { epoch });
        }
        adam.step(params, &grads)?;
        losses.push(EpochLoss { epoch, parts, total });
        totals.push(total);
        log::debug!("epoch {epoch}: loss {total:.6}");
        if converged(&totals, cfg.tol) {
            is_converged = true;
            break;
        }
    }

    let x = params.features.as_ref().or(fixed_features).ok_or_else(|| CgcError::Input("no input features".into()))?;
    let embeddings = params.encoder.encode(nb, x)?;
    let km = kmeans(&embeddings, k, cfg.kmeans_restarts, rng)?;
    let membership = soft_membership(&embeddings, &km.centroids, softness)?;
    Ok(ClusteringOutput {
        membership,
        embeddings,
        centroids: km.centroids,
        assignments: km.assignments,
        losses,
        refinements,
        converged: is_converged,
    })
}

fn init_params<T: Scalar, R: Rng>(f: &FeatureMatrix<T>, cfg: &TrainConfig, rng: &mut R) -> ParameterSet<T> {
    let learnable = f.learnable.then(|| f.values.clone());
    let mut params = ParameterSet::init(f.dim(), cfg.embed_dim, cfg.layers, learnable, rng);
    params.encoder.linear_output = cfg.linear_output;
    params
}

#[derive(Debug, Clone)]
pub struct StaticRun<T> {
    pub output: ClusteringOutput<T>,
    pub params: ParameterSet<T>,
}

/// Trains on a static graph from freshly initialized parameters, seeded by
/// `cfg.seed`, and clusters the final embeddings into `k` groups.
pub fn contrastive_graph_clustering<T: Scalar>(
    g: &StaticGraph,
    f: &FeatureMatrix<T>,
    k: usize,
    cfg: &TrainConfig,
) -> Result<StaticRun<T>> {
    if f.rows() != g.node_count() {
        return input(format!("{} feature rows for {} nodes", f.rows(), g.node_count()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params(f, cfg, &mut rng);
    let fixed = (!f.learnable).then_some(&f.values);
    let output = train(&mut params, &Graph { graph: g, weights: None }, fixed, k, cfg, None, &mut rng)?;
    Ok(StaticRun { output, params })
}

// ---------------------------------------------------------------------------
// segmentation

/// Mean cosine distance over `shared` rows; `None` when `shared` is empty.
/// A zero row on either side contributes distance 1.
pub fn drift_distance<T: Scalar>(h_seg: &Matrix<T>, h_new: &Matrix<T>, shared: &[usize]) -> Option<f64> {
    if shared.is_empty() {
        return None;
    }
    let total: f64 = shared
        .iter()
        .map(|&u| {
            let (a, b) = (h_seg.row(u), h_new.row(u));
            let na = dot(a, a).as_f64().sqrt();
            let nb = dot(b, b).as_f64().sqrt();
            if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                1.0 - dot(a, b).as_f64() / (na * nb)
            }
        })
        .sum();
    Some(total / shared.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentEvent {
    StreamStart,
    ChangePoint,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentDecision {
    pub event: SegmentEvent,
    /// `None` at stream start and when no node is active on both sides.
    pub drift: Option<f64>,
}

/// Current stream segment: contiguous positions into the stream's snapshot
/// list plus their merged graph.
#[derive(Debug, Clone, Default)]
pub struct SegmentState {
    pub id: usize,
    pub members: Vec<usize>,
    pub merged: Option<MergedGraph>,
}

impl SegmentState {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn start(id: usize, position: usize, merged: MergedGraph) -> Self {
        Self { id, members: vec![position], merged: Some(merged) }
    }
}

/// Frozen model used to score drift.
#[derive(Debug, Clone, Copy)]
pub struct FrozenModel<'a, T> {
    pub params: &'a ParameterSet<T>,
    pub fixed_features: Option<&'a Matrix<T>>,
    pub decay: TimeDecay,
}

impl<'a, T: Scalar> FrozenModel<'a, T> {
    fn encode(&self, g: &MergedGraph) -> Result<Matrix<T>> {
        let x = self.params.features.as_ref().or(self.fixed_features).ok_or_else(|| CgcError::Input("no input features".into()))?;
        self.params.encoder.encode_temporal(g, self.decay, x)
    }
}

/// Decides whether `snapshot` (at stream position `position`) extends the
/// current segment or opens a new one.
pub fn segment_step<T: Scalar>(
    seg: &SegmentState,
    snapshot: &Snapshot,
    position: usize,
    n: usize,
    model: Option<FrozenModel<'_, T>>,
    theta: f64,
) -> Result<(SegmentState, SegmentDecision)> {
    let single = MergedGraph::from_snapshots(n, [snapshot])?;
    let (merged, model) = match (&seg.merged, model) {
        (Some(m), Some(model)) if !seg.is_empty() => (m, model),
        _ => {
            let decision = SegmentDecision { event: SegmentEvent::StreamStart, drift: None };
            return Ok((SegmentState::start(seg.id, position, single), decision));
        }
    };
    let h_seg = model.encode(merged)?;
    let h_new = model.encode(&single)?;
    let shared: Vec<usize> = (0..n).filter(|&u| merged.graph().degree(u) > 0 && single.graph().degree(u) > 0).collect();
    let drift = drift_distance(&h_seg, &h_new, &shared);
    if drift.is_none_or(|d| d > theta) {
        let decision = SegmentDecision { event: SegmentEvent::ChangePoint, drift };
        return Ok((SegmentState::start(seg.id + 1, position, single), decision));
    }
    let mut next = seg.clone();
    next.members.push(position);
    next.merged = Some(merged.merge_with(snapshot)?);
    Ok((next, SegmentDecision { event: SegmentEvent::Extended, drift }))
}

// ---------------------------------------------------------------------------
// stream framework

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub span: usize,
    pub segment_id: usize,
    pub change_point: bool,
    pub event: SegmentEvent,
    pub drift: Option<f64>,
    pub losses: Vec<f64>,
    pub converged: bool,
    /// Node clustering against this span's labels.
    pub metrics: Option<ClusteringScores>,
    /// Link prediction of the next span's edges.
    pub link_prediction: Option<LinkRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub target_span: usize,
    pub edges: usize,
    pub scores: RankScores,
}

#[derive(Debug, Clone)]
pub struct SpanOutput<T> {
    pub record: SpanRecord,
    pub membership: Matrix<T>,
    pub embeddings: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct StreamRun<T> {
    pub spans: Vec<SpanOutput<T>>,
    pub params: ParameterSet<T>,
}

impl<T> StreamRun<T> {
    pub fn change_points(&self) -> Vec<usize> {
        self.spans.iter().filter(|s| s.record.change_point).map(|s| s.record.span).collect()
    }

    /// Stream positions grouped by segment.
    pub fn segments(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        for s in &self.spans {
            match out.last_mut() {
                Some(seg) if !s.record.change_point && s.record.event != SegmentEvent::StreamStart => seg.push(s.record.span),
                _ => out.push(vec![s.record.span]),
            }
        }
        out
    }

    /// Unweighted mean of per-span clustering scores.
    pub fn mean_clustering(&self) -> Option<ClusteringScores> {
        let scored: Vec<_> = self.spans.iter().filter_map(|s| s.record.metrics).collect();
        if scored.is_empty() {
            return None;
        }
        let m = scored.len() as f64;
        Some(ClusteringScores {
            acc: scored.iter().map(|s| s.acc).sum::<f64>() / m,
            nmi: scored.iter().map(|s| s.nmi).sum::<f64>() / m,
            ari: scored.iter().map(|s| s.ari).sum::<f64>() / m,
            f1: scored.iter().map(|s| s.f1).sum::<f64>() / m,
        })
    }

    /// Link-prediction scores averaged with weights `|E⁺| + |E⁻|`.
    pub fn weighted_link_prediction(&self) -> Option<RankScores> {
        let links: Vec<_> = self.spans.iter().filter_map(|s| s.record.link_prediction).collect();
        let w: Vec<f64> = links.iter().map(|l| 2.0 * l.edges as f64).collect();
        let auc: Vec<f64> = links.iter().map(|l| l.scores.auc).collect();
        let ap: Vec<f64> = links.iter().map(|l| l.scores.ap).collect();
        Some(RankScores { auc: weighted_mean(&auc, &w)?, ap: weighted_mean(&ap, &w)? })
    }
}

/// Learnable SVD features of the first snapshot, used when a stream has no
/// feature file.
pub fn stream_features<T: Scalar>(stream: &TemporalGraphStream, cfg: &TrainConfig) -> Result<FeatureMatrix<T>> {
    let n = stream.node_count();
    let first = stream.snapshots().first().ok_or_else(|| CgcError::Input("empty stream".into()))?;
    let g = MergedGraph::from_snapshots(n, [first])?;
    svd_init(g.graph(), cfg.feature_dim.min(n))
}

/// Runs segmentation and incremental training over every snapshot.
/// `labels[i]` (if given) scores span `i`; link prediction scores each span's
/// memberships against the next span's edges.
pub fn run_stream<T: Scalar>(
    stream: &TemporalGraphStream,
    features: &FeatureMatrix<T>,
    k: usize,
    labels: Option<&[Vec<usize>]>,
    cfg: &TrainConfig,
) -> Result<StreamRun<T>> {
    cfg.validate()?;
    let n = stream.node_count();
    if features.rows() != n {
        return input(format!("{} feature rows for {n} nodes", features.rows()));
    }
    if let Some(l) = labels {
        if l.len() != stream.len() {
            return input(format!("{} label spans for {} snapshots", l.len(), stream.len()));
        }
        if l.iter().any(|row| row.len() != n) {
            return input("every span needs one label per node");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params(features, cfg, &mut rng);
    let fixed = (!features.learnable).then_some(&features.values);
    let decay = cfg.decay();

    let mut seg = SegmentState::default();
    let mut previous_h: Option<Matrix<T>> = None;
    let mut spans: Vec<SpanOutput<T>> = Vec::with_capacity(stream.len());
    for (pos, snapshot) in stream.snapshots().iter().enumerate() {
        let model = (pos > 0).then_some(FrozenModel { params: &params, fixed_features: fixed, decay });
        let previous_merged = seg.merged.clone();
        let (next, decision) = segment_step(&seg, snapshot, pos, n, model, cfg.theta)?;
        seg = next;
        if decision.event == SegmentEvent::ChangePoint {
            log::info!("change point at span {} (drift {:?})", snapshot.span_index, decision.drift);
            if cfg.reset_at_change_point {
                let fresh = if features.learnable {
                    let g = MergedGraph::from_snapshots(n, [snapshot])?;
                    svd_init(g.graph(), features.dim())?
                } else {
                    features.clone()
                };
                params = init_params(&fresh, cfg, &mut rng);
            }
        }

        let merged = seg.merged.as_ref().expect("segment has a graph");
        let weights = decay.neighbor_weights(merged);
        let graph = Graph { graph: merged.graph(), weights: Some(&weights) };
        let prev_weights;
        let history = match (decision.event, &previous_h, &previous_merged) {
            (SegmentEvent::Extended, Some(prev), Some(pm)) => {
                prev_weights = decay.neighbor_weights(pm);
                Some(History { previous: prev, previous_graph: Graph { graph: pm.graph(), weights: Some(&prev_weights) } })
            }
            _ => None,
        };
        let out = train(&mut params, &graph, fixed, k, cfg, history.as_ref(), &mut rng)?;

        let metrics = match labels {
            Some(l) => Some(clustering_metrics(&out.assignments, &l[pos])?),
            None => None,
        };
        previous_h = Some(out.embeddings.clone());
        spans.push(SpanOutput {
            record: SpanRecord {
                span: snapshot.span_index,
                segment_id: seg.id,
                change_point: decision.event == SegmentEvent::ChangePoint,
                event: decision.event,
                drift: decision.drift,
                losses: out.losses.iter().map(|l| l.total).collect(),
                converged: out.converged,
                metrics,
                link_prediction: None,
            },
            membership: out.membership,
            embeddings: out.embeddings,
        });
    }

    for pos in 0..spans.len().saturating_sub(1) {
        let next = &stream.snapshots()[pos + 1];
        let positives: Vec<(usize, usize)> = {
            let g = MergedGraph::from_snapshots(n, [next])?;
            g.graph().edges().to_vec()
        };
        if positives.is_empty() {
            continue;
        }
        let negatives = sample_negative_edges(&positives, n, &mut rng)?;
        let phi = &spans[pos].membership;
        let score = |&(u, v): &(usize, usize)| link_score(phi, u, v).as_f64();
        let pos_scores: Vec<f64> = positives.iter().map(score).collect();
        let neg_scores: Vec<f64> = negatives.iter().map(score).collect();
        spans[pos].record.link_prediction = Some(LinkRecord {
            target_span: next.span_index,
            edges: positives.len(),
            scores: rank_metrics(&pos_scores, &neg_scores)?,
        });
    }
    Ok(StreamRun { spans, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_sbm, SynthSpec};

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            max_epoch: 20,
            embed_dim: 16,
            kmeans_restarts: 2,
            level_multipliers: vec![1, 2],
            ..TrainConfig::static_default()
        }
    }

    #[test]
    fn defaults_are_valid() {
        TrainConfig::static_default().validate().unwrap();
        TrainConfig::temporal_default().validate().unwrap();
        assert_eq!(TrainConfig::static_default().levels(2), vec![2, 10, 50]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            TrainConfig { refine_interval: 0, ..small_cfg() },
            TrainConfig { max_epoch: 0, ..small_cfg() },
            TrainConfig { level_multipliers: vec![5, 1], ..small_cfg() },
            TrainConfig { psi: 0.0, ..small_cfg() },
            TrainConfig { delta: 1.5, ..small_cfg() },
            TrainConfig { theta: f64::NAN, ..small_cfg() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn single_epoch_runs_one_refinement() {
        let spec = SynthSpec { n_per_group: 10, ..SynthSpec::sbm(1) };
        let (g, _, f) = gen_sbm::<f64>(&spec).unwrap();
        let cfg = TrainConfig { max_epoch: 1, refine_interval: 1, ..small_cfg() };
        let run = contrastive_graph_clustering(&g, &f, 2, &cfg).unwrap();
        assert_eq!(run.output.losses.len(), 1);
        assert_eq!(run.output.refinements, 1);
        assert_eq!(run.output.membership.shape(), (20, 2));
        assert_eq!(run.output.assignments.len(), 20);
    }

    #[test]
    fn refinement_every_second_epoch() {
        let spec = SynthSpec { n_per_group: 10, ..SynthSpec::sbm(2) };
        let (g, _, f) = gen_sbm::<f64>(&spec).unwrap();
        let cfg = TrainConfig { max_epoch: 7, refine_interval: 2, tol: 0.0, ..small_cfg() };
        let run = contrastive_graph_clustering(&g, &f, 2, &cfg).unwrap();
        // epochs 0, 2, 4, 6
        assert_eq!(run.output.refinements, 4);
    }

    #[test]
    fn convergence_needs_full_window() {
        let flat = vec![1.0; CONVERGENCE_WINDOW];
        assert!(!converged(&flat, 1e-3));
        let flat = vec![1.0; CONVERGENCE_WINDOW + 1];
        assert!(converged(&flat, 1e-3));
        let mut falling: Vec<f64> = (0..=CONVERGENCE_WINDOW).map(|e| 2.0 - 0.01 * e as f64).collect();
        assert!(!converged(&falling, 1e-3));
        falling.push(0.0);
        assert!(!converged(&falling, 1e-3));
    }

    #[test]
    fn cluster_levels_larger_than_graph_rejected() {
        let spec = SynthSpec { n_per_group: 3, ..SynthSpec::sbm(3) };
        let (g, _, f) = gen_sbm::<f64>(&spec).unwrap();
        let cfg = TrainConfig { level_multipliers: vec![1, 5], ..small_cfg() };
        assert!(contrastive_graph_clustering(&g, &f, 2, &cfg).is_err());
    }

    #[test]
    fn drift_distance_cases() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 4.0]]);
        assert!(drift_distance(&a, &a, &[0, 1, 2]).unwrap().abs() < 1e-15);
        let b = Matrix::from_rows(&[vec![0.0, 1.0], vec![5.0, 0.0], vec![-4.0, 3.0]]);
        assert!((drift_distance(&a, &b, &[0, 1, 2]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(drift_distance(&a, &b, &[]), None);
        let z = Matrix::zeros(3, 2);
        assert_eq!(drift_distance(&a, &z, &[0]), Some(1.0));
        assert_eq!(drift_distance(&z, &z, &[0, 1]), Some(1.0));
        let opposite = a.map(|x| -x);
        assert!((drift_distance(&a, &opposite, &[2]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn drift_matches_per_row_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Matrix::from_fn(15, 4, |_, _| rng.gen_range(-1.0..1.0));
        let b = Matrix::from_fn(15, 4, |_, _| rng.gen_range(-1.0..1.0));
        let shared: Vec<usize> = (0..15).step_by(2).collect();
        let oracle = shared
            .iter()
            .map(|&u| {
                let (x, y) = (a.row(u), b.row(u));
                let num: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
                let nx: f64 = x.iter().map(|p| p * p).sum::<f64>().sqrt();
                let ny: f64 = y.iter().map(|q| q * q).sum::<f64>().sqrt();
                1.0 - num / (nx * ny)
            })
            .sum::<f64>()
            / shared.len() as f64;
        let got = drift_distance(&a, &b, &shared).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert_eq!(got, drift_distance(&b, &a, &shared).unwrap());
    }

    fn toy_stream() -> TemporalGraphStream {
        let snap = |i: usize| Snapshot::new(i, vec![(0, 1, i as f64), (1, 2, i as f64 + 0.5), (0, 2, i as f64 + 0.2), (3, 4, i as f64)]);
        TemporalGraphStream::new(6, vec![snap(0), snap(1)]).unwrap()
    }

    #[test]
    fn first_snapshot_starts_stream() {
        let stream = toy_stream();
        let (seg, d) = segment_step::<f64>(&SegmentState::default(), &stream.snapshots()[0], 0, 6, None, 0.3).unwrap();
        assert_eq!(d.event, SegmentEvent::StreamStart);
        assert_eq!(seg.members, vec![0]);
    }

    #[test]
    fn identical_snapshot_extends_single_segment() {
        let stream = toy_stream();
        let f = stream_features::<f64>(&stream, &TrainConfig::temporal_default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = ParameterSet::init(f.dim(), 8, 1, Some(f.values.clone()), &mut rng);
        let model = FrozenModel { params: &params, fixed_features: None, decay: TimeDecay::new(1.0, 1.0).unwrap() };
        let (seg, _) = segment_step(&SegmentState::default(), &stream.snapshots()[0], 0, 6, Some(model), 0.3).unwrap();
        let (seg, d) = segment_step(&seg, &stream.snapshots()[1], 1, 6, Some(model), 0.0).unwrap();
        assert_eq!(d.event, SegmentEvent::Extended);
        assert!(d.drift.unwrap().abs() < 1e-12);
        assert_eq!(seg.members, vec![0, 1]);
        assert_eq!(seg.id, 0);
    }

    #[test]
    fn disjoint_snapshot_is_change_point() {
        let a = Snapshot::new(0, vec![(0, 1, 0.0)]);
        let b = Snapshot::new(1, vec![(2, 3, 1.0)]);
        let stream = TemporalGraphStream::new(4, vec![a, b]).unwrap();
        let f = FeatureMatrix::fixed(Matrix::<f64>::identity(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = ParameterSet::init(4, 3, 1, None, &mut rng);
        let model = FrozenModel { params: &params, fixed_features: Some(&f.values), decay: TimeDecay::new(0.9, 1.0).unwrap() };
        let (seg, _) = segment_step(&SegmentState::default(), &stream.snapshots()[0], 0, 4, Some(model), 0.3).unwrap();
        let (seg, d) = segment_step(&seg, &stream.snapshots()[1], 1, 4, Some(model), f64::INFINITY).unwrap();
        assert_eq!(d, SegmentDecision { event: SegmentEvent::ChangePoint, drift: None });
        assert_eq!(seg.id, 1);
    }

    #[test]
    fn single_snapshot_stream_matches_static_training() {
        let snap = Snapshot::new(0, vec![(0, 1, 0.0), (1, 2, 0.0), (0, 2, 0.0), (3, 4, 0.0), (4, 5, 0.0), (3, 5, 0.0), (2, 3, 0.0)]);
        let stream = TemporalGraphStream::new(6, vec![snap]).unwrap();
        let f = FeatureMatrix::fixed(Matrix::<f64>::identity(6)).unwrap();
        let cfg = TrainConfig { psi: 1.0, level_multipliers: vec![1], embed_dim: 4, max_epoch: 5, ..TrainConfig::temporal_default() };
        let run = run_stream(&stream, &f, 2, None, &cfg).unwrap();
        let g = MergedGraph::from_snapshots(6, stream.snapshots()).unwrap();
        let solo = contrastive_graph_clustering(g.graph(), &f, 2, &cfg).unwrap();
        assert_eq!(run.spans.len(), 1);
        assert_eq!(run.spans[0].record.event, SegmentEvent::StreamStart);
        assert_eq!(run.spans[0].membership, solo.output.membership);
        assert_eq!(run.spans[0].embeddings, solo.output.embeddings);
    }

    #[test]
    fn identical_snapshots_form_one_segment() {
        let stream = toy_stream();
        let f = stream_features::<f64>(&stream, &TrainConfig::temporal_default()).unwrap();
        let cfg = TrainConfig { level_multipliers: vec![1], embed_dim: 4, max_epoch: 5, psi: 1.0, ..TrainConfig::temporal_default() };
        let run = run_stream(&stream, &f, 2, None, &cfg).unwrap();
        assert_eq!(run.segments(), vec![vec![0, 1]]);
        assert!(run.change_points().is_empty());
        let lp = run.spans[0].record.link_prediction.unwrap();
        assert_eq!((lp.target_span, lp.edges), (1, 4));
        assert!(run.spans[1].record.link_prediction.is_none());
    }

    #[test]
    fn stream_label_shape_checked() {
        let stream = toy_stream();
        let f = stream_features::<f64>(&stream, &TrainConfig::temporal_default()).unwrap();
        let labels = vec![vec![0; 6]];
        assert!(run_stream(&stream, &f, 2, Some(&labels), &TrainConfig::temporal_default()).is_err());
    }
}

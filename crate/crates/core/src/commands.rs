//! End-to-end commands behind the `cgc` binary. Each reads its inputs,
//! runs, and writes plain-text outputs into one directory.

use crate::clustering::argmax_rows;
use crate::error::{input, Result};
use crate::eval::{clustering_metrics, link_score, rank_metrics, sample_negative_edges, ClusteringScores, RankScores};
use crate::features::FeatureMatrix;
use crate::graph::StaticGraph;
use crate::io::{
    bucket_stream, edges_text, ensure_absent, matrix_csv, read_config, read_edges, read_label_rows, read_labels, read_matrix,
    read_temporal_edges, span_labels, temporal_edges_text, OutputSet,
};
use crate::synth::{gen_reorg, gen_sbm, gen_traveling, Scenario, SynthSpec};
use crate::trainer::{contrastive_graph_clustering, run_stream, stream_features, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Values given on the command line; they win over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub theta: Option<f64>,
    pub span_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub k: usize,
    pub span_length: f64,
}

impl Overrides {
    pub fn resolve(&self, base: TrainConfig) -> Result<RunConfig> {
        let (mut train, extras) = match &self.config {
            Some(p) => read_config(p, base)?,
            None => (base, Default::default()),
        };
        if let Some(s) = self.seed {
            train.seed = s;
        }
        if let Some(t) = self.theta {
            train.theta = t;
        }
        let k = self.k.or(extras.k).ok_or_else(|| crate::CgcError::Input("number of clusters required (--k)".into()))?;
        if k == 0 {
            return input("k must be at least 1");
        }
        let span_length = self.span_length.or(extras.span_length).unwrap_or(1.0);
        train.validate()?;
        Ok(RunConfig { train, k, span_length })
    }
}

#[derive(Debug, Clone)]
pub struct StaticOptions {
    pub edges: PathBuf,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: PathBuf,
    pub force: bool,
    pub overrides: Overrides,
}

#[derive(Debug, Clone)]
pub struct StaticReport {
    pub metrics: Option<ClusteringScores>,
    pub epochs: usize,
    pub files: Vec<PathBuf>,
}

fn scores_header() -> &'static str {
    "acc,nmi,ari,f1"
}

fn scores_row(s: &ClusteringScores) -> String {
    format!("{},{},{},{}", s.acc, s.nmi, s.ari, s.f1)
}

pub fn cmd_cluster_static(opts: &StaticOptions) -> Result<StaticReport> {
    let run_cfg = opts.overrides.resolve(TrainConfig::static_default())?;
    let Some(features_path) = &opts.features else {
        return input("static clustering needs a feature file (--features)");
    };
    ensure_absent(&opts.out, ["membership.csv", "embeddings.csv", "centroids.csv", "loss.csv", "metrics.csv"], opts.force)?;
    let pairs = read_edges(&opts.edges)?;
    let values = read_matrix(features_path)?;
    let labels = opts.labels.as_deref().map(read_labels).transpose()?;
    let n = values.rows();
    if let Some(&(u, v)) = pairs.iter().find(|&&(u, v)| u.max(v) >= n) {
        return input(format!("edge ({u}, {v}) references a node beyond the {n} feature rows"));
    }
    if let Some(l) = &labels {
        if l.len() != n {
            return input(format!("{} labels for {n} nodes", l.len()));
        }
    }
    let g = StaticGraph::new(n, &pairs)?;
    let f = FeatureMatrix::fixed(values)?;
    let run = contrastive_graph_clustering(&g, &f, run_cfg.k, &run_cfg.train)?;
    let out = &run.output;

    let mut files = OutputSet::new(&opts.out);
    files.add("membership.csv", matrix_csv(&out.membership));
    files.add("embeddings.csv", matrix_csv(&out.embeddings));
    files.add("centroids.csv", matrix_csv(&out.centroids));
    let mut loss = String::from("epoch,features,homophily,community,total\n");
    for e in &out.losses {
        let _ = writeln!(loss, "{},{},{},{},{}", e.epoch, e.parts.features, e.parts.homophily, e.parts.community, e.total);
    }
    files.add("loss.csv", loss);
    let metrics = match &labels {
        Some(l) => Some(clustering_metrics(&out.assignments, l)?),
        None => None,
    };
    if let Some(m) = &metrics {
        files.add("metrics.csv", format!("{}\n{}\n", scores_header(), scores_row(m)));
    }
    let files = files.write(opts.force)?;
    Ok(StaticReport { metrics, epochs: out.losses.len(), files })
}

#[derive(Debug, Clone)]
pub struct StreamOptions {
    pub edges: PathBuf,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: PathBuf,
    pub force: bool,
    pub overrides: Overrides,
}

#[derive(Debug, Clone)]
pub struct StreamReport {
    pub change_points: Vec<usize>,
    pub segments: Vec<Vec<usize>>,
    pub mean_clustering: Option<ClusteringScores>,
    pub link_prediction: Option<RankScores>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_cluster_stream(opts: &StreamOptions) -> Result<StreamReport> {
    let run_cfg = opts.overrides.resolve(TrainConfig::temporal_default())?;
    ensure_absent(&opts.out, ["spans.jsonl", "segments.csv", "change_points.csv", "membership_span0.csv"], opts.force)?;
    let events = read_temporal_edges(&opts.edges)?;
    if events.is_empty() {
        return input("temporal edge list is empty");
    }
    let fixed = opts.features.as_deref().map(read_matrix).transpose()?;
    let label_rows = opts.labels.as_deref().map(read_label_rows).transpose()?;
    let max_id = events.iter().map(|e| e.0.max(e.1)).max().unwrap_or(0);
    let n = [Some(max_id + 1), fixed.as_ref().map(|f| f.rows()), label_rows.as_ref().map(Vec::len)]
        .into_iter()
        .flatten()
        .max()
        .unwrap_or(0);
    let stream = bucket_stream(n, &events, run_cfg.span_length)?;
    let features = match fixed {
        Some(values) => FeatureMatrix::fixed(values)?,
        None => stream_features(&stream, &run_cfg.train)?,
    };
    let labels = label_rows.as_deref().map(span_labels);
    let run = run_stream(&stream, &features, run_cfg.k, labels.as_deref(), &run_cfg.train)?;

    let mut files = OutputSet::new(&opts.out);
    let mut spans_jsonl = String::new();
    let mut segments_csv = String::from("span,segment_id,event,drift\n");
    let mut cps_csv = String::from("span,drift\n");
    let drift_str = |d: Option<f64>| d.map_or(String::new(), |x| x.to_string());
    for s in &run.spans {
        let r = &s.record;
        files.add(format!("membership_span{}.csv", r.span), matrix_csv(&s.membership));
        spans_jsonl.push_str(&serde_json::to_string(r)?);
        spans_jsonl.push('\n');
        let event = serde_json::to_value(r.event)?;
        let _ = writeln!(segments_csv, "{},{},{},{}", r.span, r.segment_id, event.as_str().unwrap_or(""), drift_str(r.drift));
        if r.change_point {
            let _ = writeln!(cps_csv, "{},{}", r.span, drift_str(r.drift));
        }
    }
    files.add("spans.jsonl", spans_jsonl);
    files.add("segments.csv", segments_csv);
    files.add("change_points.csv", cps_csv);

    let mean_clustering = run.mean_clustering();
    if let Some(mean) = &mean_clustering {
        let mut csv = format!("span,{}\n", scores_header());
        for s in &run.spans {
            if let Some(m) = &s.record.metrics {
                let _ = writeln!(csv, "{},{}", s.record.span, scores_row(m));
            }
        }
        let _ = writeln!(csv, "mean,{}", scores_row(mean));
        files.add("metrics.csv", csv);
    }
    let link_prediction = run.weighted_link_prediction();
    if let Some(total) = &link_prediction {
        let mut csv = String::from("span,target_span,edges,auc,ap\n");
        for s in &run.spans {
            if let Some(l) = &s.record.link_prediction {
                let _ = writeln!(csv, "{},{},{},{},{}", s.record.span, l.target_span, l.edges, l.scores.auc, l.scores.ap);
            }
        }
        let _ = writeln!(csv, "weighted,,,{},{}", total.auc, total.ap);
        files.add("link_prediction.csv", csv);
    }
    let files = files.write(opts.force)?;
    Ok(StreamReport { change_points: run.change_points(), segments: run.segments(), mean_clustering, link_prediction, files })
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub spec: SynthSpec,
    pub out: PathBuf,
    pub force: bool,
}

/// Writes `edges.txt` and `labels.txt` (plus `features.csv` for the static
/// SBM). Stream labels hold one column per span.
pub fn cmd_synth(opts: &SynthOptions) -> Result<Vec<PathBuf>> {
    let mut files = OutputSet::new(&opts.out);
    match opts.spec.scenario {
        Scenario::StaticSbm => {
            let (g, labels, f) = gen_sbm::<f64>(&opts.spec)?;
            files.add("edges.txt", edges_text(&g));
            files.add("labels.txt", labels.iter().map(|l| format!("{l}\n")).collect());
            files.add("features.csv", matrix_csv(&f.values));
        }
        Scenario::Traveling | Scenario::Reorg => {
            let (stream, labels) = if opts.spec.scenario == Scenario::Traveling {
                gen_traveling(&opts.spec)?
            } else {
                gen_reorg(&opts.spec)?
            };
            files.add("edges.txt", temporal_edges_text(&stream));
            let n = stream.node_count();
            let rows: String = (0..n)
                .map(|u| {
                    let cols: Vec<String> = labels.iter().map(|span| span[u].to_string()).collect();
                    cols.join(" ") + "\n"
                })
                .collect();
            files.add("labels.txt", rows);
        }
    }
    files.add("spec.json", serde_json::to_string_pretty(&opts.spec)? + "\n");
    files.write(opts.force)
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub membership: PathBuf,
    pub labels: Option<PathBuf>,
    /// Positive edges for link prediction.
    pub edges: Option<PathBuf>,
    /// Negative edges; sampled uniformly when absent.
    pub negatives: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub force: bool,
}

#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub clustering: Option<ClusteringScores>,
    pub ranking: Option<RankScores>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_eval(opts: &EvalOptions) -> Result<EvalReport> {
    if opts.labels.is_none() && opts.edges.is_none() {
        return input("eval needs --labels and/or --edges");
    }
    let phi = read_matrix(&opts.membership)?;
    let n = phi.rows();
    let mut report = EvalReport::default();
    let mut csv = String::from("metric,value\n");
    if let Some(path) = &opts.labels {
        let truth = read_labels(path)?;
        if truth.len() != n {
            return input(format!("{} labels for {n} membership rows", truth.len()));
        }
        let s = clustering_metrics(&argmax_rows(&phi), &truth)?;
        let _ = write!(csv, "acc,{}\nnmi,{}\nari,{}\nf1,{}\n", s.acc, s.nmi, s.ari, s.f1);
        report.clustering = Some(s);
    }
    if let Some(path) = &opts.edges {
        let pos = canonical_edges(&read_edges(path)?, n, path)?;
        let neg = match &opts.negatives {
            Some(p) => canonical_edges(&read_edges(p)?, n, p)?,
            None => sample_negative_edges(&pos, n, &mut ChaCha8Rng::seed_from_u64(opts.seed))?,
        };
        let score = |e: &(usize, usize)| link_score(&phi, e.0, e.1);
        let r = rank_metrics(&pos.iter().map(score).collect::<Vec<_>>(), &neg.iter().map(score).collect::<Vec<_>>())?;
        let _ = write!(csv, "auc,{}\nap,{}\n", r.auc, r.ap);
        report.ranking = Some(r);
    }
    let mut files = OutputSet::new(&opts.out);
    files.add("metrics.csv", csv);
    report.files = files.write(opts.force)?;
    Ok(report)
}

fn canonical_edges(pairs: &[(usize, usize)], n: usize, path: &Path) -> Result<Vec<(usize, usize)>> {
    Ok(StaticGraph::new(n, pairs)
        .map_err(|e| crate::CgcError::Input(format!("{}: {e}", path.display())))?
        .edges()
        .to_vec())
}

//! Text formats: edge lists, feature and membership CSVs, label files and the
//! flat `key = value` configuration file.

use crate::error::{input, CgcError, Result};
use crate::graph::{Snapshot, StaticGraph, TemporalEdge, TemporalGraphStream};
use crate::matrix::Matrix;
use crate::trainer::TrainConfig;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

fn parse_err<T>(path: &Path, line: usize, msg: impl Into<String>) -> Result<T> {
    Err(CgcError::Parse { path: path.display().to_string(), line, msg: msg.into() })
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse().or_else(|_| parse_err(path, line, format!("invalid {what} `{tok}`")))
}

/// `u v` per line.
pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)?;
    content_lines(&text)
        .map(|(no, line)| {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 2 {
                return parse_err(path, no, format!("expected `u v`, found {} fields", toks.len()));
            }
            Ok((field(path, no, toks[0], "node id")?, field(path, no, toks[1], "node id")?))
        })
        .collect()
}

/// `u v t` per line.
pub fn read_temporal_edges(path: &Path) -> Result<Vec<TemporalEdge>> {
    let text = fs::read_to_string(path)?;
    content_lines(&text)
        .map(|(no, line)| {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 {
                return parse_err(path, no, format!("expected `u v t`, found {} fields", toks.len()));
            }
            let t: f64 = field(path, no, toks[2], "timestamp")?;
            if !t.is_finite() || t < 0.0 {
                return parse_err(path, no, format!("timestamp {t} must be finite and non-negative"));
            }
            Ok((field(path, no, toks[0], "node id")?, field(path, no, toks[1], "node id")?, t))
        })
        .collect()
}

/// Buckets events into spans `[i·len, (i+1)·len)`; empty spans are skipped.
pub fn bucket_stream(n: usize, events: &[TemporalEdge], span_length: f64) -> Result<TemporalGraphStream> {
    if !(span_length > 0.0) || !span_length.is_finite() {
        return input(format!("span length {span_length} must be positive"));
    }
    let mut buckets: std::collections::BTreeMap<usize, Vec<TemporalEdge>> = Default::default();
    for &e in events {
        let span = (e.2 / span_length).floor() as usize;
        buckets.entry(span).or_default().push(e);
    }
    let snapshots = buckets.into_iter().map(|(i, edges)| Snapshot::new(i, edges)).collect();
    TemporalGraphStream::new(n, snapshots)
}

/// Comma-separated real matrix, one row per line.
pub fn read_matrix(path: &Path) -> Result<Matrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (no, line) in content_lines(&text) {
        let row = line
            .split(',')
            .map(|tok| {
                let x: f64 = field(path, no, tok.trim(), "number")?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    parse_err(path, no, format!("non-finite value `{}`", tok.trim()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return parse_err(path, no, format!("expected {} columns, found {}", first.len(), row.len()));
            }
        }
        rows.push(row);
    }
    Ok(Matrix::from_rows(&rows))
}

/// One whitespace-separated row of integer labels per node. A single column
/// holds static labels; several columns hold one label per stream span.
pub fn read_label_rows(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<usize>> = Vec::new();
    for (no, line) in content_lines(&text) {
        let row = line.split_whitespace().map(|tok| field(path, no, tok, "label")).collect::<Result<Vec<usize>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return parse_err(path, no, format!("expected {} labels, found {}", first.len(), row.len()));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let rows = read_label_rows(path)?;
    if rows.first().is_some_and(|r| r.len() != 1) {
        return parse_err(path, 1, "expected one label per line");
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

/// Transposes node-major label rows into `labels[span][node]`.
pub fn span_labels(rows: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let spans = rows.first().map_or(0, Vec::len);
    (0..spans).map(|s| rows.iter().map(|r| r[s]).collect()).collect()
}

/// Applies `key = value` lines on top of `base`.
pub fn read_config(path: &Path, base: TrainConfig) -> Result<(TrainConfig, ConfigExtras)> {
    let text = fs::read_to_string(path)?;
    parse_config(&text, path, base)
}

/// Keys that are not part of [`TrainConfig`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigExtras {
    pub k: Option<usize>,
    pub span_length: Option<f64>,
}

pub fn parse_config(text: &str, path: &Path, mut cfg: TrainConfig) -> Result<(TrainConfig, ConfigExtras)> {
    let mut extras = ConfigExtras::default();
    for (no, line) in content_lines(text) {
        let Some((key, value)) = line.split_once('=') else {
            return parse_err(path, no, "expected `key = value`");
        };
        let (key, v) = (key.trim(), value.trim());
        macro_rules! set {
            ($($field:ident).+) => {
                cfg.$($field).+ = field(path, no, v, key)?
            };
        }
        match key {
            "max_epoch" => set!(max_epoch),
            "refine_interval" => set!(refine_interval),
            "lr" => set!(lr),
            "weight_decay" => set!(weight_decay),
            "temperature" => set!(temperature),
            "delta" => set!(delta),
            "psi" => set!(psi),
            "decay_interval" => set!(decay_interval),
            "theta" => set!(theta),
            "levels" => {
                cfg.level_multipliers =
                    v.split(',').map(|m| field(path, no, m.trim(), "level multiplier")).collect::<Result<_>>()?
            }
            "r_f" => set!(feature_negatives),
            "r_h" => set!(homophily_negatives),
            "r_c" => set!(community_negatives),
            "r_t" => set!(temporal_negatives),
            "lambda_f" => set!(weights.features),
            "lambda_h" => set!(weights.homophily),
            "lambda_c" => set!(weights.community),
            "lambda_t" => set!(weights.temporal),
            "tol" => set!(tol),
            "seed" => set!(seed),
            "embed_dim" => set!(embed_dim),
            "feature_dim" => set!(feature_dim),
            "layers" => set!(layers),
            "kmeans_restarts" => set!(kmeans_restarts),
            "membership_softness" => set!(membership_softness),
            "linear_output" => set!(linear_output),
            "reset_at_change_point" => set!(reset_at_change_point),
            "k" => extras.k = Some(field(path, no, v, key)?),
            "span_length" => extras.span_length = Some(field(path, no, v, key)?),
            other => return parse_err(path, no, format!("unknown key `{other}`")),
        }
    }
    Ok((cfg, extras))
}

pub fn matrix_csv(m: &Matrix<f64>) -> String {
    let mut out = String::new();
    for row in m.iter_rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn edges_text(g: &StaticGraph) -> String {
    g.edges().iter().fold(String::new(), |mut s, (u, v)| {
        let _ = writeln!(s, "{u} {v}");
        s
    })
}

pub fn temporal_edges_text(stream: &TemporalGraphStream) -> String {
    let mut s = String::new();
    for snap in stream.snapshots() {
        for (u, v, t) in &snap.edges {
            let _ = writeln!(s, "{u} {v} {t}");
        }
    }
    s
}

/// Collects output files and writes them together, refusing to clobber
/// existing files unless `force` is set.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl OutputSet {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), files: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn write(self, force: bool) -> Result<Vec<PathBuf>> {
        ensure_absent(&self.dir, self.names(), force)?;
        fs::create_dir_all(&self.dir)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, contents) in self.files {
            let path = self.dir.join(name);
            fs::write(&path, contents)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Fails with [`CgcError::Exists`] if any of `names` is already in `dir`
/// and `force` is unset. Lets commands refuse before doing the work.
pub fn ensure_absent<'a>(dir: &Path, names: impl IntoIterator<Item = &'a str>, force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    match names.into_iter().map(|n| dir.join(n)).find(|p| p.exists()) {
        Some(p) => Err(CgcError::Exists(p.display().to_string())),
        None => Ok(()),
    }
}

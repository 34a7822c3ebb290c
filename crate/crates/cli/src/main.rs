use anyhow::Result;
use cgc_core::commands::{
    cmd_cluster_static, cmd_cluster_stream, cmd_eval, cmd_synth, EvalOptions, Overrides, StaticOptions, StreamOptions,
    SynthOptions,
};
use cgc_core::synth::{Scenario, SynthSpec};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cgc", version, about = "Contrastive graph clustering for static graphs and temporal streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a static attributed graph.
    ClusterStatic(ClusterArgs),
    /// Segment and cluster a temporal edge stream.
    ClusterStream(StreamArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Score a membership matrix against labels or held-out edges.
    Eval(EvalArgs),
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ClusterArgs {
    /// Edge list, one `u v` pair per line.
    #[arg(long)]
    edges: PathBuf,
    /// Node features as CSV, one row per node.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Ground-truth labels, one per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct StreamArgs {
    /// Temporal edge list, one `u v t` triple per line.
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Labels with one column per span.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Change-point threshold on embedding drift.
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// Width of a span in timestamp units.
    #[arg(long)]
    span_length: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SynthArgs {
    /// traveling, reorg or static-sbm.
    #[arg(long)]
    scenario: Scenario,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_per_group: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Membership matrix as CSV.
    #[arg(long)]
    membership: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Positive edges for link prediction.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Negative edges; sampled when omitted.
    #[arg(long)]
    negatives: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

fn overrides(c: &Common, theta: Option<f64>, span_length: Option<f64>) -> Overrides {
    Overrides { config: c.config.clone(), k: c.k, seed: c.seed, theta, span_length }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ClusterStatic(a) => {
            let report = cmd_cluster_static(&StaticOptions {
                edges: a.edges,
                features: a.features,
                labels: a.labels,
                out: a.common.out.clone(),
                force: a.common.force,
                overrides: overrides(&a.common, None, None),
            })?;
            println!("trained {} epochs", report.epochs);
            if let Some(m) = report.metrics {
                println!("acc {:.4} nmi {:.4} ari {:.4} f1 {:.4}", m.acc, m.nmi, m.ari, m.f1);
            }
        }
        Command::ClusterStream(a) => {
            let report = cmd_cluster_stream(&StreamOptions {
                edges: a.edges,
                features: a.features,
                labels: a.labels,
                out: a.common.out.clone(),
                force: a.common.force,
                overrides: overrides(&a.common, a.theta, a.span_length),
            })?;
            println!("change points: {:?}", report.change_points);
            println!("segments: {:?}", report.segments);
            if let Some(m) = report.mean_clustering {
                println!("mean acc {:.4} nmi {:.4} ari {:.4} f1 {:.4}", m.acc, m.nmi, m.ari, m.f1);
            }
            if let Some(r) = report.link_prediction {
                println!("link prediction auc {:.4} ap {:.4}", r.auc, r.ap);
            }
        }
        Command::Synth(a) => {
            let mut spec = match a.scenario {
                Scenario::Traveling => SynthSpec::traveling(a.seed),
                Scenario::Reorg => SynthSpec::reorg(a.seed),
                Scenario::StaticSbm => SynthSpec::sbm(a.seed),
            };
            if let Some(m) = a.n_per_group {
                spec.n_per_group = m;
            }
            for f in cmd_synth(&SynthOptions { spec, out: a.out, force: a.force })? {
                println!("wrote {}", f.display());
            }
        }
        Command::Eval(a) => {
            let report = cmd_eval(&EvalOptions {
                membership: a.membership,
                labels: a.labels,
                edges: a.edges,
                negatives: a.negatives,
                seed: a.seed,
                out: a.out,
                force: a.force,
            })?;
            if let Some(m) = report.clustering {
                println!("acc {:.4} nmi {:.4} ari {:.4} f1 {:.4}", m.acc, m.nmi, m.ari, m.f1);
            }
            if let Some(r) = report.ranking {
                println!("auc {:.4} ap {:.4}", r.auc, r.ap);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

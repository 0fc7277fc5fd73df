//! `chaingrade`: dataset validation, gold aggregation, annotation serving and
//! judge experiments from one binary.
//!
//! Usage errors exit with 2, runtime failures with 1.

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use chaingrade_annotation_service::{serve, AnnotationStore, AppState};
use chaingrade_core::annotation::{aggregate_records, apply_gold, render_validity};
use chaingrade_core::dataset::{compute_split_stats, load_dataset, save_records, SchemaMode};
use chaingrade_core::experiments::{
    build_backend, emit_report, run_choice_ranking, run_pairwise, run_scoring, ExperimentConfig, ExperimentError,
    ExperimentReport, GoldEchoBackend, ReportFormat, ShotSetting, TypeSource,
};
use chaingrade_core::judge::{JudgeBackend, Modality, RemoteConfig};
use chaingrade_core::metrics::ScoringMethod;
use chaingrade_core::model::{LabelTask, RelevanceMode, Split};
use chaingrade_core::stats::Orientation;

#[derive(Debug, Parser)]
#[command(name = "chaingrade", version, about = "Evaluate multimodal reasoning chains and the judges that grade them")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for every random choice (few-shot sampling).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of judge trials to average.
    #[arg(long, global = true)]
    trials: Option<u32>,

    /// How description relevance counts toward a good step: lenient or strict.
    #[arg(long, global = true)]
    relevance_mode: Option<RelevanceMode>,

    /// Somers' D orientation: pred-dependent or ref-dependent.
    #[arg(long, global = true)]
    orientation: Option<Orientation>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a dataset file against the record schema.
    Validate {
        path: PathBuf,
        /// Drop bad lines and report them instead of failing.
        #[arg(long)]
        repair: bool,
    },
    /// Turn annotator votes into gold labels and a validity summary.
    Aggregate {
        votes: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Write the per-record validity summary here instead of stdout.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Per-split dataset statistics.
    Stats {
        dataset: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Serve the staged annotation flow over HTTP.
    ServeAnnotation {
        dataset: PathBuf,
        /// Append-only vote log; replayed if it exists.
        #[arg(long)]
        votes: PathBuf,
        /// Directory that image references resolve against.
        #[arg(long, default_value = ".")]
        images: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Judge labels against gold labels, task by task.
    Pairwise(RunArgs),
    /// Correlate judge scores with human references.
    Score {
        #[command(flatten)]
        run: RunArgs,
        /// holistic, stepwise, miceval-type or miceval-all.
        #[arg(long)]
        method: Option<ScoringMethod>,
    },
    /// Pick the best-scored answer per question and check it against gold.
    Rank {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        method: Option<ScoringMethod>,
    },
    /// Re-render a saved JSON report.
    Report {
        input: PathBuf,
        /// json, tsv or md.
        #[arg(long, default_value = "md")]
        format: ReportFormat,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// scripted:<path>, constant:<text>, gold-echo or remote.
    #[arg(long)]
    judge: Option<String>,
    #[arg(long)]
    split: Option<Split>,
    /// zero-shot or few-shot.
    #[arg(long)]
    setting: Option<ShotSetting>,
    #[arg(long)]
    shots: Option<usize>,
    /// multimodal or textual demonstrations.
    #[arg(long)]
    modality: Option<Modality>,
    /// Comma-separated task keys, e.g. StepType,McotCorrectness.
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<LabelTask>>,
    /// Where step types come from for miceval-type: gold or judge.
    #[arg(long)]
    type_source: Option<TypeSource>,
    /// Also report step-level correlations.
    #[arg(long)]
    step_level: bool,
    /// Remote judge endpoint; the bearer token is read from JUDGE_API_TOKEN.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// json, tsv or md.
    #[arg(long, default_value = "json")]
    format: ReportFormat,
}

fn usage_error(message: &str) -> ! {
    Cli::command().error(ErrorKind::MissingRequiredArgument, message).exit()
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display())),
        None => io::stdout().write_all(bytes).context("cannot write to stdout"),
    }
}

fn experiment_config(cli: &Cli, run: &RunArgs, method: Option<ScoringMethod>) -> Result<ExperimentConfig> {
    let mut cfg = match &run.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let (Some(dataset), Some(judge)) = (&run.dataset, &run.judge) else {
                usage_error("either --config or both --dataset and --judge are required");
            };
            ExperimentConfig::new(dataset, judge)
        }
    };
    if run.config.is_some() {
        if let Some(d) = &run.dataset {
            cfg.dataset = d.clone();
        }
        if let Some(j) = &run.judge {
            cfg.judge = j.clone();
        }
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(m) = cli.relevance_mode {
        cfg.relevance_mode = m;
    }
    if let Some(o) = cli.orientation {
        cfg.orientation = o;
    }
    if let Some(m) = method {
        cfg.method = m;
    }
    if run.split.is_some() {
        cfg.split = run.split;
    }
    if let Some(s) = run.setting {
        cfg.setting = s;
    }
    if let Some(k) = run.shots {
        cfg.shots = k;
    }
    if let Some(m) = run.modality {
        cfg.modality = m;
    }
    if let Some(tasks) = &run.tasks {
        cfg.tasks = tasks.clone();
    }
    if let Some(t) = run.type_source {
        cfg.type_source = t;
    }
    cfg.step_level |= run.step_level;
    if let Some(endpoint) = &run.endpoint {
        cfg.remote = Some(RemoteConfig {
            endpoint: endpoint.clone(),
            model: run.model.clone().unwrap_or_default(),
            max_tokens: 64,
            timeout_secs: 60,
        });
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Clone, Copy)]
enum Protocol {
    Pairwise,
    Score,
    Rank,
}

fn run_experiment(cli: &Cli, run: &RunArgs, method: Option<ScoringMethod>, protocol: Protocol) -> Result<()> {
    let cfg = experiment_config(cli, run, method)?;
    let dataset = load_dataset(&cfg.dataset, SchemaMode::Strict)
        .with_context(|| format!("cannot load {}", cfg.dataset.display()))?;
    let backend: Box<dyn JudgeBackend> = if cfg.judge == "gold-echo" {
        Box::new(GoldEchoBackend::new(&dataset.records, cfg.relevance_mode))
    } else {
        build_backend(&cfg.judge, cfg.remote.as_ref())?
    };
    let result = match protocol {
        Protocol::Pairwise => {
            let pool = match &cfg.shot_pool {
                Some(path) => load_dataset(path, SchemaMode::Strict)?.records,
                None => dataset.records.clone(),
            };
            run_pairwise(&cfg, &dataset.records, &pool, backend.as_ref())
        }
        Protocol::Score => run_scoring(&cfg, &dataset.records, backend.as_ref()),
        Protocol::Rank => run_choice_ranking(&cfg, &dataset.records, backend.as_ref()),
    };
    let report = match result {
        Ok(report) => report,
        Err(ExperimentError::Aborted { source, partial }) => {
            if let Some(out) = &run.out {
                write_output(Some(out), &emit_report(&partial, run.format))?;
                eprintln!("partial report written to {}", out.display());
            }
            bail!("judge failed after {} traces: {source}", partial.trace_count());
        }
        Err(e) => return Err(e.into()),
    };
    write_output(run.out.as_deref(), &emit_report(&report, run.format))?;
    eprintln!(
        "{} traces; invalid outputs {} of {} ({:.4})",
        report.trace_count(),
        report.invalid.invalid,
        report.invalid.outputs,
        report.invalid.proportion
    );
    Ok(())
}

fn validate(path: &Path, repair: bool) -> Result<()> {
    let mode = if repair { SchemaMode::Repair } else { SchemaMode::Strict };
    let dataset = load_dataset(path, mode).with_context(|| format!("{} is not a valid dataset", path.display()))?;
    for r in &dataset.rejected {
        println!("rejected line {}: {}", r.line, r.reason);
    }
    println!(
        "{} records valid (schema v{}, sha256 {})",
        dataset.records.len(),
        dataset.provenance.schema_version,
        dataset.provenance.sha256
    );
    Ok(())
}

fn aggregate(cli: &Cli, votes: &Path, out: &Path, summary: Option<&Path>) -> Result<()> {
    let mode = cli.relevance_mode.unwrap_or_default();
    let mut dataset = load_dataset(votes, SchemaMode::Strict).with_context(|| format!("cannot load {}", votes.display()))?;
    let (aggs, report) = aggregate_records(&dataset.records, mode)?;
    apply_gold(&mut dataset.records, &aggs);
    dataset.records.sort_by(|a, b| a.id.cmp(&b.id));
    save_records(&dataset.records, out)?;
    write_output(summary, render_validity(&aggs).as_bytes())?;
    eprintln!(
        "{} records: {} valid, {} invalid ({} by step, {} by split step types)",
        report.records, report.valid_records, report.invalid_records, report.invalid_by_step, report.invalid_by_split_types
    );
    Ok(())
}

fn stats(dataset: &Path, out: Option<&Path>) -> Result<()> {
    let data = load_dataset(dataset, SchemaMode::Strict)?;
    let mut table = serde_json::Map::new();
    for split in Split::ALL {
        if data.split(split).next().is_some() {
            let s = compute_split_stats(&data.records, split)?;
            table.insert(split.to_string(), serde_json::to_value(s)?);
        }
    }
    let mut text = serde_json::to_string_pretty(&table)?;
    text.push('\n');
    write_output(out, text.as_bytes())
}

fn serve_annotation(dataset: &Path, votes: &Path, images: &Path, addr: SocketAddr) -> Result<()> {
    let data = load_dataset(dataset, SchemaMode::Strict)?;
    let store = AnnotationStore::open(data.records, Some(votes))?;
    let state = AppState::new(store, images);
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("annotation service listening on http://{addr}");
    runtime.block_on(serve(addr, state))?;
    Ok(())
}

fn report(input: &Path, format: ReportFormat, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let report: ExperimentReport = serde_json::from_str(&text).with_context(|| format!("{} is not a report", input.display()))?;
    write_output(out, &emit_report(&report, format))
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate { path, repair } => validate(path, *repair),
        Command::Aggregate { votes, out, summary } => aggregate(cli, votes, out, summary.as_deref()),
        Command::Stats { dataset, out } => stats(dataset, out.as_deref()),
        Command::ServeAnnotation {
            dataset,
            votes,
            images,
            addr,
        } => serve_annotation(dataset, votes, images, *addr),
        Command::Pairwise(run) => run_experiment(cli, run, None, Protocol::Pairwise),
        Command::Score { run, method } => run_experiment(cli, run, *method, Protocol::Score),
        Command::Rank { run, method } => run_experiment(cli, run, *method, Protocol::Rank),
        Command::Report { input, format, out } => report(input, *format, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

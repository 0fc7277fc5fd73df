//! Experiment reports and their serializations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ShotSetting, TypeSource};
use super::{
    aggregate_label_traces, aggregate_ranking_traces, aggregate_score_traces, score_invalid_summary, ChainTrace,
    CorrelationLevel, CorrelationRow, InvalidSummary, LabelF1, LabelTrace, RankingSummary, RankingTrace,
    TaskAccuracy,
};
use crate::judge::{JudgeBackend, Modality};
use crate::metrics::ScoringMethod;
use crate::model::{LabelTask, Split};
use crate::stats::Orientation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportKind {
    Pairwise,
    Scoring,
    Ranking,
}

/// The configuration values that influence results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    /// File name only, so the same data in another directory gives the same report.
    pub dataset: String,
    pub judge: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub tasks: Vec<LabelTask>,
    pub setting: ShotSetting,
    pub shots: usize,
    pub modality: Modality,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub method: String,
    pub type_source: TypeSource,
    pub trials: u32,
    pub relevance_mode: String,
    pub orientation: String,
    pub retry_limit: u32,
    pub step_level: bool,
}

fn file_name(path: &str) -> String {
    Path::new(path)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}

impl ConfigEcho {
    pub fn new(cfg: &ExperimentConfig, backend: &dyn JudgeBackend) -> Self {
        let judge = backend.describe();
        let judge = match judge.strip_prefix("scripted:") {
            Some(path) => format!("scripted:{}", file_name(path)),
            None => judge,
        };
        Self {
            dataset: file_name(&cfg.dataset.to_string_lossy()),
            judge,
            split: cfg.split,
            tasks: cfg.tasks.clone(),
            setting: cfg.setting,
            shots: cfg.shots,
            modality: cfg.modality,
            seed: cfg.seed,
            seeds: cfg.seeds.clone(),
            method: cfg.method.cli_name().to_string(),
            type_source: cfg.type_source,
            trials: cfg.trials,
            relevance_mode: cfg.relevance_mode.to_string(),
            orientation: cfg.orientation.to_string(),
            retry_limit: cfg.retry_limit,
            step_level: cfg.step_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ReportKind,
    pub config: ConfigEcho,
    pub metadata: BTreeMap<String, String>,
    pub accuracy: Vec<TaskAccuracy>,
    pub label_f1: Vec<LabelF1>,
    pub invalid: InvalidSummary,
    pub correlations: Vec<CorrelationRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<RankingSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_traces: Vec<LabelTrace>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub score_traces: Vec<ChainTrace>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ranking_traces: Vec<RankingTrace>,
}

impl ExperimentReport {
    pub fn new(kind: ReportKind, cfg: &ExperimentConfig, backend: &dyn JudgeBackend) -> Self {
        let mut metadata = BTreeMap::new();
        metadata.insert("trial_aggregation".into(), "mean over trials".into());
        metadata.insert("invalid_outputs".into(), "counted incorrect; scored 0".into());
        if kind != ReportKind::Pairwise {
            metadata.insert("somers_d_orientation".into(), cfg.orientation.to_string());
            metadata.insert("overall_scope".into(), "items pooled across splits".into());
            metadata.insert("chain_reference".into(), "gold chain verdict as 0/1".into());
        }
        Self {
            kind,
            config: ConfigEcho::new(cfg, backend),
            metadata,
            accuracy: Vec::new(),
            label_f1: Vec::new(),
            invalid: InvalidSummary::default(),
            correlations: Vec::new(),
            ranking: None,
            label_traces: Vec::new(),
            score_traces: Vec::new(),
            ranking_traces: Vec::new(),
        }
    }

    pub fn trace_count(&self) -> usize {
        self.label_traces.len() + self.score_traces.len() + self.ranking_traces.len()
    }

    /// Rebuilds every aggregate from the traces.
    pub fn recompute(&mut self) {
        match self.kind {
            ReportKind::Pairwise => {
                let (accuracy, f1, invalid) = aggregate_label_traces(&self.label_traces);
                self.accuracy = accuracy;
                self.label_f1 = f1;
                self.invalid = invalid;
            }
            ReportKind::Scoring => {
                let orientation: Orientation = self.config.orientation.parse().unwrap_or_default();
                self.correlations = aggregate_score_traces(&self.score_traces, orientation, self.config.step_level);
                self.invalid = score_invalid_summary(&self.score_traces);
            }
            ReportKind::Ranking => {
                let method: ScoringMethod = self.config.method.parse().unwrap_or(ScoringMethod::MiCEvalAll);
                self.ranking = aggregate_ranking_traces(&self.ranking_traces, method);
                self.invalid = score_invalid_summary(&self.score_traces);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    Structured,
    DelimitedTable,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Structured),
            "tsv" => Ok(ReportFormat::DelimitedTable),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(format!("unknown report format {s:?}; expected json, tsv or md")),
        }
    }
}

const COLUMN_NAMES: [&str; 9] = [
    "Step Type",
    "Desc. Relevance",
    "Desc. Correctness",
    "Desc. Error Types",
    "Logic Relevance",
    "Logic Correctness",
    "Informativeness",
    "Logic Error Types",
    "MCoT",
];

fn num(x: f64) -> String {
    format!("{x:.4}")
}

fn opt(x: Option<f64>, note: Option<&String>) -> String {
    match (x, note) {
        (Some(v), _) => num(v),
        (None, Some(_)) => "undefined".into(),
        (None, None) => "-".into(),
    }
}

fn accuracy_rows(report: &ExperimentReport) -> Vec<(String, Vec<Option<f64>>)> {
    let splits: BTreeSet<Split> = report
        .accuracy
        .iter()
        .flat_map(|a| a.per_split.keys().copied())
        .collect();
    let cell = |task: LabelTask, split: Option<Split>| {
        report.accuracy.iter().find(|a| a.task == task).and_then(|a| match split {
            Some(s) => a.per_split.get(&s).copied(),
            None => Some(a.overall),
        })
    };
    let mut rows: Vec<(String, Option<Split>)> = splits.iter().map(|s| (s.to_string(), Some(*s))).collect();
    if !report.accuracy.is_empty() {
        rows.push(("Overall".into(), None));
    }
    rows.into_iter()
        .map(|(name, split)| (name, LabelTask::PAIRWISE.iter().map(|&t| cell(t, split)).collect()))
        .collect()
}

fn average(cells: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = cells.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

fn correlation_cell(rows: &[&CorrelationRow], scope: &str, spearman: bool) -> String {
    match rows.iter().find(|r| r.scope == scope) {
        None => "-".into(),
        Some(r) if spearman => opt(r.spearman, r.spearman_note.as_ref()),
        Some(r) => opt(r.somers_d, r.somers_note.as_ref()),
    }
}

fn level_name(level: CorrelationLevel) -> &'static str {
    match level {
        CorrelationLevel::Chain => "chain",
        CorrelationLevel::Step => "step",
    }
}

fn grouped_correlations(report: &ExperimentReport) -> Vec<((ScoringMethod, CorrelationLevel), Vec<&CorrelationRow>)> {
    let mut groups: BTreeMap<(ScoringMethod, CorrelationLevel), Vec<&CorrelationRow>> = BTreeMap::new();
    for row in &report.correlations {
        groups.entry((row.method, row.level)).or_default().push(row);
    }
    groups.into_iter().collect()
}

fn markdown(report: &ExperimentReport) -> String {
    let mut out = String::new();
    match report.kind {
        ReportKind::Pairwise => {
            out.push_str("## Pairwise comparison accuracy\n\n");
            let _ = writeln!(out, "| Split | {} | Avg. |", COLUMN_NAMES.join(" | "));
            let _ = writeln!(out, "|---|{}---|", "---|".repeat(COLUMN_NAMES.len()));
            for (name, cells) in accuracy_rows(report) {
                let rendered: Vec<String> = cells.iter().map(|c| opt(*c, None)).collect();
                let _ = writeln!(out, "| {name} | {} | {} |", rendered.join(" | "), opt(average(&cells), None));
            }
            let _ = writeln!(
                out,
                "\nInvalid outputs: {} of {} ({})\n",
                report.invalid.invalid,
                report.invalid.outputs,
                num(report.invalid.proportion)
            );
            out.push_str("## Per-label F1\n\n| Task | Label | Support | Precision | Recall | F1 |\n|---|---|---|---|---|---|\n");
            for f in &report.label_f1 {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} |",
                    f.task.display(),
                    f.task.label_display(&f.label).unwrap_or(&f.label),
                    f.support,
                    num(f.precision),
                    num(f.recall),
                    num(f.f1)
                );
            }
        }
        ReportKind::Scoring => {
            for (title, spearman) in [("Somers' D", false), ("Spearman's rho", true)] {
                let _ = writeln!(out, "## Scoring evaluation: {title}\n");
                out.push_str("| Method | Level | Hard | Normal | Overall |\n|---|---|---|---|---|\n");
                for ((method, level), rows) in grouped_correlations(report) {
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {} | {} |",
                        method.cli_name(),
                        level_name(level),
                        correlation_cell(&rows, "Hard", spearman),
                        correlation_cell(&rows, "Normal", spearman),
                        correlation_cell(&rows, "Overall", spearman)
                    );
                }
                out.push('\n');
            }
            let _ = writeln!(
                out,
                "Invalid outputs: {} of {} ({})",
                report.invalid.invalid,
                report.invalid.outputs,
                num(report.invalid.proportion)
            );
        }
        ReportKind::Ranking => {
            out.push_str("## Choice ranking\n\n| Method | Questions | Accuracy | Ties |\n|---|---|---|---|\n");
            if let Some(r) = &report.ranking {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} |",
                    r.method.cli_name(),
                    r.questions,
                    num(r.accuracy),
                    r.ties
                );
            }
            let _ = writeln!(
                out,
                "\nInvalid outputs: {} of {} ({})",
                report.invalid.invalid,
                report.invalid.outputs,
                num(report.invalid.proportion)
            );
        }
    }
    out
}

fn tsv(report: &ExperimentReport) -> String {
    let mut out = String::new();
    match report.kind {
        ReportKind::Pairwise => {
            out.push_str("# accuracy\ntask\tsplit\taccuracy\titems\tinvalid\tinvalid_proportion\n");
            for a in &report.accuracy {
                for (split, v) in &a.per_split {
                    let _ = writeln!(out, "{}\t{split}\t{}\t\t\t", a.task, num(*v));
                }
                let _ = writeln!(
                    out,
                    "{}\tOverall\t{}\t{}\t{}\t{}",
                    a.task,
                    num(a.overall),
                    a.items,
                    a.invalid,
                    num(a.invalid_proportion)
                );
            }
            out.push_str("# label_f1\ntask\tlabel\tsupport\tprecision\trecall\tf1\n");
            for f in &report.label_f1 {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    f.task,
                    f.label,
                    f.support,
                    num(f.precision),
                    num(f.recall),
                    num(f.f1)
                );
            }
        }
        ReportKind::Scoring => {
            out.push_str("# correlations\nmethod\tlevel\tscope\titems\tsomers_d\tspearman\n");
            for r in &report.correlations {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    r.method.cli_name(),
                    level_name(r.level),
                    r.scope,
                    r.items,
                    opt(r.somers_d, r.somers_note.as_ref()),
                    opt(r.spearman, r.spearman_note.as_ref())
                );
            }
        }
        ReportKind::Ranking => {
            out.push_str("# ranking\nmethod\tquestions\taccuracy\tties\n");
            if let Some(r) = &report.ranking {
                let _ = writeln!(out, "{}\t{}\t{}\t{}", r.method.cli_name(), r.questions, num(r.accuracy), r.ties);
            }
        }
    }
    let _ = writeln!(
        out,
        "# invalid\noutputs\tinvalid\tproportion\n{}\t{}\t{}",
        report.invalid.outputs,
        report.invalid.invalid,
        num(report.invalid.proportion)
    );
    out
}

/// Deterministic serialization of a report.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Structured => {
            let mut s = serde_json::to_string_pretty(report).unwrap_or_else(|e| format!("{{\"error\": \"{e}\"}}"));
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::DelimitedTable => tsv(report).into_bytes(),
        ReportFormat::Markdown => markdown(report).into_bytes(),
    }
}

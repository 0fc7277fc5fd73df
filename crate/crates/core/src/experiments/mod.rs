//! Experiment protocols: pairwise comparison of judge labels against gold,
//! scoring evaluation with four chain-scoring methods, and choice ranking.
//!
//! Records are sorted by id and filtered to gold-valid ones before anything
//! else happens, so input order never affects results. Every aggregate in a
//! report is computed from the report's own traces by the `aggregate_*`
//! functions, which tests call again to confirm recomputability.

pub mod config;
pub mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{export_ranking_set, DatasetError};
use crate::judge::prompt::answer_text;
use crate::judge::shots::gold_items;
use crate::judge::{
    build_prompt, invoke_all, sample_shots, JudgeBackend, JudgeError, JudgeTask, JudgeVerdict, Level, Outcome,
    PromptBundle, Setting, ShotSet,
};
use crate::metrics::{
    geo_mean, human_reference_score, step_correctness_all, step_correctness_typed, MetricsError, ScoringMethod,
};
use crate::model::{
    ComponentScores, GoldStepLabel, LabelTask, McotRecord, RelevanceMode, ScoreDimension, Split, StepType,
};
use crate::stats::{self, Orientation, PairedItem, PairedSample};

pub use config::{build_backend, ExperimentConfig, ShotSetting, TypeSource};
pub use report::{emit_report, ExperimentReport, ReportFormat, ReportKind};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("no gold-valid items match the selected split and tasks")]
    NoItems,
    #[error("ranking set is empty: no question has both a correct and an incorrect option")]
    EmptyRankingSet,
    #[error("judge failed; {} traces kept: {source}", partial.trace_count())]
    Aborted {
        source: JudgeError,
        partial: Box<ExperimentReport>,
    },
}

/// Mean that returns the common value exactly when all inputs agree.
pub fn trial_mean(values: &[f64]) -> Option<f64> {
    let first = *values.first()?;
    if values.iter().all(|&v| v == first) {
        return Some(first);
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Gold-valid records, optionally restricted to one split, ordered by id.
pub fn evaluable(records: &[McotRecord], split: Option<Split>) -> Vec<&McotRecord> {
    let mut out: Vec<&McotRecord> = records
        .iter()
        .filter(|r| r.valid_gold().is_some() && split.is_none_or(|s| r.split == s))
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

// ---------------------------------------------------------------------------
// Pairwise comparison

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTrace {
    pub task: LabelTask,
    pub record_id: String,
    pub split: Split,
    pub step_index: usize,
    pub trial: u32,
    pub gold: String,
    /// `None` when the judge output stayed invalid after retries.
    pub predicted: Option<String>,
    pub raw_text: String,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAccuracy {
    pub task: LabelTask,
    pub items: usize,
    pub per_split: BTreeMap<Split, f64>,
    pub overall: f64,
    pub invalid: usize,
    pub invalid_proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelF1 {
    pub task: LabelTask,
    pub label: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InvalidSummary {
    pub outputs: usize,
    pub invalid: usize,
    pub proportion: f64,
}

fn task_rank(task: LabelTask) -> usize {
    LabelTask::PAIRWISE
        .iter()
        .position(|&t| t == task)
        .unwrap_or(LabelTask::PAIRWISE.len())
}

fn invalid_summary(outputs: usize, invalid: usize) -> InvalidSummary {
    InvalidSummary {
        outputs,
        invalid,
        proportion: if outputs == 0 { 0.0 } else { invalid as f64 / outputs as f64 },
    }
}

/// Accuracy, per-label F1 and invalid counts from label traces.
pub fn aggregate_label_traces(traces: &[LabelTrace]) -> (Vec<TaskAccuracy>, Vec<LabelF1>, InvalidSummary) {
    let mut by_task: BTreeMap<(usize, LabelTask), Vec<&LabelTrace>> = BTreeMap::new();
    for t in traces {
        by_task.entry((task_rank(t.task), t.task)).or_default().push(t);
    }
    let mut accuracy = Vec::new();
    let mut f1s = Vec::new();
    for ((_, task), rows) in by_task {
        let trials: BTreeSet<u32> = rows.iter().map(|t| t.trial).collect();
        let splits: BTreeSet<Split> = rows.iter().map(|t| t.split).collect();
        let trial_rows = |trial: u32| rows.iter().copied().filter(move |t| t.trial == trial);
        let acc = |sel: &[&LabelTrace]| -> f64 {
            let preds: Vec<Option<&str>> = sel.iter().map(|t| t.predicted.as_deref()).collect();
            let golds: Vec<&str> = sel.iter().map(|t| t.gold.as_str()).collect();
            stats::accuracy(&preds, &golds).unwrap_or(0.0)
        };
        let overall: Vec<f64> = trials
            .iter()
            .map(|&tr| acc(&trial_rows(tr).collect::<Vec<_>>()))
            .collect();
        let mut per_split = BTreeMap::new();
        for &split in &splits {
            let vals: Vec<f64> = trials
                .iter()
                .map(|&tr| acc(&trial_rows(tr).filter(|t| t.split == split).collect::<Vec<_>>()))
                .collect();
            per_split.insert(split, trial_mean(&vals).unwrap_or(0.0));
        }
        let invalid = rows.iter().filter(|t| t.predicted.is_none()).count();
        let first_trial = trials.iter().next().copied().unwrap_or(0);
        accuracy.push(TaskAccuracy {
            task,
            items: trial_rows(first_trial).count(),
            per_split,
            overall: trial_mean(&overall).unwrap_or(0.0),
            invalid,
            invalid_proportion: invalid_summary(rows.len(), invalid).proportion,
        });

        for &label in task.domain() {
            let mut p = Vec::new();
            let mut r = Vec::new();
            let mut f = Vec::new();
            let mut support = 0;
            for &tr in &trials {
                let sel: Vec<&LabelTrace> = trial_rows(tr).collect();
                let preds: Vec<Option<&str>> = sel.iter().map(|t| t.predicted.as_deref()).collect();
                let golds: Vec<&str> = sel.iter().map(|t| t.gold.as_str()).collect();
                if let Ok(score) = stats::per_label_f1(&preds, &golds, &label) {
                    p.push(score.precision);
                    r.push(score.recall);
                    f.push(score.f1);
                    if tr == first_trial {
                        support = score.support;
                    }
                }
            }
            f1s.push(LabelF1 {
                task,
                label: label.to_string(),
                support,
                precision: trial_mean(&p).unwrap_or(0.0),
                recall: trial_mean(&r).unwrap_or(0.0),
                f1: trial_mean(&f).unwrap_or(0.0),
            });
        }
    }
    let invalid = traces.iter().filter(|t| t.predicted.is_none()).count();
    (accuracy, f1s, invalid_summary(traces.len(), invalid))
}

fn shots_for(
    cfg: &ExperimentConfig,
    pool: &[McotRecord],
    task: LabelTask,
    trial: u32,
) -> Result<Option<ShotSet>, JudgeError> {
    match cfg.setting {
        ShotSetting::ZeroShot => Ok(None),
        ShotSetting::FewShot => {
            sample_shots(pool, task, cfg.shots, cfg.modality, cfg.shot_seed(trial), None).map(Some)
        }
    }
}

/// Runs the nine-task (or configured) pairwise comparison.
pub fn run_pairwise(
    cfg: &ExperimentConfig,
    records: &[McotRecord],
    pool: &[McotRecord],
    backend: &dyn JudgeBackend,
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let recs = evaluable(records, cfg.split);
    let mut pool: Vec<McotRecord> = pool.iter().filter(|r| r.valid_gold().is_some()).cloned().collect();
    pool.sort_by(|a, b| a.id.cmp(&b.id));

    let mut report = ExperimentReport::new(ReportKind::Pairwise, cfg, backend);
    let mut traces: Vec<LabelTrace> = Vec::new();
    for &task in &cfg.tasks {
        let items: Vec<(&McotRecord, usize, String)> = recs
            .iter()
            .flat_map(|&r| gold_items(r, task).into_iter().map(move |(s, l)| (r, s, l)))
            .collect();
        if items.is_empty() {
            continue;
        }
        let level = if task.is_chain_level() { Level::McotLevel } else { Level::StepLevel };
        for trial in 0..cfg.trials {
            let shared = shots_for(cfg, &pool, task, trial)?;
            let mut bundles = Vec::with_capacity(items.len());
            for (record, step, _) in &items {
                let own = match &shared {
                    Some(set) if set.demos.iter().any(|d| d.record_id == record.id) => Some(sample_shots(
                        &pool,
                        task,
                        cfg.shots,
                        cfg.modality,
                        set.seed,
                        Some(&record.id),
                    )?),
                    _ => None,
                };
                let setting = match (&own, &shared) {
                    (Some(set), _) | (None, Some(set)) => Setting::FewShot(set),
                    (None, None) => Setting::ZeroShot,
                };
                bundles.push(build_prompt(JudgeTask::Label(task), record, *step, setting, level)?);
            }
            let results = invoke_all(backend, &bundles, cfg.retry_limit, trial, cfg.max_in_flight);
            for (((record, step, gold), bundle), result) in items.iter().zip(&bundles).zip(results) {
                match result {
                    Ok(v) => traces.push(label_trace(task, record, *step, trial, gold, bundle, v)),
                    Err(source) => {
                        report.label_traces = traces;
                        report.recompute();
                        return Err(ExperimentError::Aborted {
                            source,
                            partial: Box::new(report),
                        });
                    }
                }
            }
        }
    }
    if traces.is_empty() {
        return Err(ExperimentError::NoItems);
    }
    report.label_traces = traces;
    report.recompute();
    Ok(report)
}

fn label_trace(
    task: LabelTask,
    record: &McotRecord,
    step: usize,
    trial: u32,
    gold: &str,
    bundle: &PromptBundle,
    v: JudgeVerdict,
) -> LabelTrace {
    LabelTrace {
        task,
        record_id: record.id.clone(),
        split: record.split,
        step_index: step,
        trial,
        gold: gold.to_string(),
        predicted: match v.outcome {
            Outcome::Label(l) => Some(l),
            _ => None,
        },
        raw_text: v.raw_text,
        attempts: v.attempts,
        shots: bundle
            .shots
            .iter()
            .map(|s| format!("{}#{}", s.record_id, s.step_index))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Scoring evaluation

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallTrace {
    pub task: String,
    pub step_index: usize,
    pub raw_text: String,
    pub attempts: u32,
    pub invalid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_type: Option<StepType>,
    pub components: ComponentScores,
    pub value: f64,
    /// Human reference for step-level correlation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    pub invalid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub record_id: String,
    pub split: Split,
    pub trial: u32,
    pub method: ScoringMethod,
    /// Gold chain verdict as 0 or 1.
    pub reference: f64,
    pub value: f64,
    /// Some judge output stayed invalid; invalid parts scored 0.
    pub invalid: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<StepTrace>,
    pub calls: Vec<CallTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CorrelationLevel {
    Chain,
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub method: ScoringMethod,
    pub level: CorrelationLevel,
    /// `Hard`, `Normal` or `Overall` (items pooled across splits).
    pub scope: String,
    pub items: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub somers_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub somers_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman_note: Option<String>,
}

/// Reference components of a gold step on the dimensions of its type.
fn reference_components(gold: &GoldStepLabel, mode: RelevanceMode) -> Result<ComponentScores, MetricsError> {
    let mut c = ComponentScores::default();
    let Some(step_type) = gold.step_type else {
        return Ok(c);
    };
    for &dim in ScoreDimension::for_type(step_type) {
        let task = dim.reference_task();
        if let Some(label) = gold.label(task) {
            c.set(dim, human_reference_score(task, label, mode)?);
        }
    }
    Ok(c)
}

/// Step reference combined the way `method` combines judge scores.
/// Dimensions that do not apply to the gold type count as satisfied.
fn step_reference(method: ScoringMethod, gold: &GoldStepLabel, mode: RelevanceMode) -> Result<Option<f64>, MetricsError> {
    let Some(step_type) = gold.step_type else {
        return Ok(None);
    };
    let mut comps = reference_components(gold, mode)?;
    Ok(match method {
        ScoringMethod::Holistic => None,
        ScoringMethod::StepwisePlain | ScoringMethod::MiCEvalType => Some(step_correctness_typed(step_type, &comps)?),
        ScoringMethod::MiCEvalAll => {
            for dim in ScoreDimension::ALL {
                if comps.get(dim).is_none() {
                    comps.set(dim, 1.0);
                }
            }
            Some(step_correctness_all(&comps)?)
        }
    })
}

fn score_value(v: &JudgeVerdict) -> Option<f64> {
    match v.outcome {
        Outcome::Score10(s) => Some(f64::from(s) / 10.0),
        _ => None,
    }
}

fn call_trace(bundle: &PromptBundle, v: &JudgeVerdict) -> CallTrace {
    CallTrace {
        task: bundle.task.key(),
        step_index: bundle.step_index,
        raw_text: v.raw_text.clone(),
        attempts: v.attempts,
        invalid: v.outcome.is_invalid(),
    }
}

#[derive(Default)]
struct Batch {
    owners: Vec<(usize, usize)>,
    bundles: Vec<PromptBundle>,
}

impl Batch {
    fn push(&mut self, record_pos: usize, step: usize, bundle: PromptBundle) {
        self.owners.push((record_pos, step));
        self.bundles.push(bundle);
    }
}

type Answers = HashMap<(usize, usize, JudgeTask), (CallTrace, JudgeVerdict)>;

fn run_batch(
    cfg: &ExperimentConfig,
    backend: &dyn JudgeBackend,
    batch: Batch,
    trial: u32,
    answers: &mut Answers,
) -> Result<(), JudgeError> {
    let results = invoke_all(backend, &batch.bundles, cfg.retry_limit, trial, cfg.max_in_flight);
    for ((&(pos, step), bundle), result) in batch.owners.iter().zip(&batch.bundles).zip(results) {
        let v = result?;
        answers.insert((pos, step, bundle.task), (call_trace(bundle, &v), v));
    }
    Ok(())
}

/// Scores every record once per trial with the configured method.
pub fn score_records(
    cfg: &ExperimentConfig,
    recs: &[&McotRecord],
    backend: &dyn JudgeBackend,
) -> Result<Vec<ChainTrace>, ExperimentError> {
    let method = cfg.method;
    let mut traces = Vec::new();
    for trial in 0..cfg.trials {
        let mut answers: Answers = HashMap::new();
        let step_type_task = JudgeTask::Label(LabelTask::StepType);
        let judge_types = method == ScoringMethod::MiCEvalType && cfg.type_source == TypeSource::Judge;
        if judge_types {
            let mut batch = Batch::default();
            for (pos, r) in recs.iter().enumerate() {
                for s in &r.steps {
                    batch.push(pos, s.index, build_prompt(step_type_task, r, s.index, Setting::ZeroShot, Level::StepLevel)?);
                }
            }
            run_batch(cfg, backend, batch, trial, &mut answers)?;
        }
        let step_type_of = |answers: &Answers, pos: usize, r: &McotRecord, step: usize| -> Option<StepType> {
            if judge_types {
                match &answers.get(&(pos, step, step_type_task))?.1.outcome {
                    Outcome::Label(l) => StepType::from_key(l),
                    _ => None,
                }
            } else {
                r.valid_gold()?.step(step)?.step_type
            }
        };

        let mut batch = Batch::default();
        for (pos, r) in recs.iter().enumerate() {
            match method {
                ScoringMethod::Holistic => {
                    batch.push(pos, 0, build_prompt(JudgeTask::McotScore, r, 0, Setting::ZeroShot, Level::McotLevel)?);
                }
                ScoringMethod::StepwisePlain => {
                    for s in &r.steps {
                        batch.push(pos, s.index, build_prompt(JudgeTask::StepScore, r, s.index, Setting::ZeroShot, Level::StepLevel)?);
                    }
                }
                ScoringMethod::MiCEvalType | ScoringMethod::MiCEvalAll => {
                    for s in &r.steps {
                        let dims: &[ScoreDimension] = if method == ScoringMethod::MiCEvalAll {
                            &ScoreDimension::ALL
                        } else {
                            match step_type_of(&answers, pos, r, s.index) {
                                Some(t) => ScoreDimension::for_type(t),
                                None => &[],
                            }
                        };
                        for &d in dims {
                            let task = JudgeTask::DimensionScore(d);
                            batch.push(pos, s.index, build_prompt(task, r, s.index, Setting::ZeroShot, Level::StepLevel)?);
                        }
                    }
                }
            }
        }
        run_batch(cfg, backend, batch, trial, &mut answers)?;

        for (pos, r) in recs.iter().enumerate() {
            let gold = r.valid_gold().ok_or(ExperimentError::NoItems)?;
            let mut calls = Vec::new();
            let mut steps = Vec::new();
            let mut invalid = false;
            let value = match method {
                ScoringMethod::Holistic => {
                    let (call, v) = &answers[&(pos, 0, JudgeTask::McotScore)];
                    calls.push(call.clone());
                    invalid = call.invalid;
                    score_value(v).unwrap_or(0.0)
                }
                _ => {
                    for s in &r.steps {
                        let gold_step = gold.step(s.index);
                        let reference = match gold_step {
                            Some(g) => step_reference(method, g, cfg.relevance_mode)?,
                            None => None,
                        };
                        let mut st = StepTrace {
                            step_index: s.index,
                            step_type: None,
                            components: ComponentScores::default(),
                            value: 0.0,
                            reference,
                            invalid: false,
                        };
                        if method == ScoringMethod::StepwisePlain {
                            let (call, v) = &answers[&(pos, s.index, JudgeTask::StepScore)];
                            calls.push(call.clone());
                            st.invalid = call.invalid;
                            st.value = score_value(v).unwrap_or(0.0);
                        } else {
                            if judge_types {
                                let (call, _) = &answers[&(pos, s.index, step_type_task)];
                                calls.push(call.clone());
                                st.invalid |= call.invalid;
                            }
                            let step_type = step_type_of(&answers, pos, r, s.index);
                            let dims: &[ScoreDimension] = match (method, step_type) {
                                (ScoringMethod::MiCEvalAll, _) => &ScoreDimension::ALL,
                                (_, Some(t)) => ScoreDimension::for_type(t),
                                (_, None) => &[],
                            };
                            for &d in dims {
                                let (call, v) = &answers[&(pos, s.index, JudgeTask::DimensionScore(d))];
                                calls.push(call.clone());
                                st.invalid |= call.invalid;
                                st.components.set(d, score_value(v).unwrap_or(0.0));
                            }
                            st.step_type = if method == ScoringMethod::MiCEvalAll { None } else { step_type };
                            st.value = match (method, step_type) {
                                (ScoringMethod::MiCEvalAll, _) => step_correctness_all(&st.components)?,
                                (_, Some(t)) => step_correctness_typed(t, &st.components)?,
                                (_, None) => 0.0,
                            };
                        }
                        invalid |= st.invalid;
                        steps.push(st);
                    }
                    let values: Vec<f64> = steps.iter().map(|s| s.value).collect();
                    geo_mean(&values)?
                }
            };
            traces.push(ChainTrace {
                record_id: r.id.clone(),
                split: r.split,
                trial,
                method,
                reference: if gold.mcot_correct { 1.0 } else { 0.0 },
                value,
                invalid,
                steps,
                calls,
            });
        }
    }
    Ok(traces)
}

fn correlate(
    per_trial: &[PairedSample],
    orientation: Orientation,
) -> (Option<f64>, Option<String>, Option<f64>, Option<String>) {
    let mut d = Vec::new();
    let mut d_note = None;
    let mut rho = Vec::new();
    let mut rho_note = None;
    for sample in per_trial {
        match stats::somers_d(sample, orientation) {
            Ok(v) => d.push(v),
            Err(e) => d_note = d_note.or(Some(e.to_string())),
        }
        match stats::spearman_rho(sample) {
            Ok(v) => rho.push(v),
            Err(e) => rho_note = rho_note.or(Some(e.to_string())),
        }
    }
    let d = if d_note.is_none() { trial_mean(&d) } else { None };
    let rho = if rho_note.is_none() { trial_mean(&rho) } else { None };
    (d, d_note, rho, rho_note)
}

/// Somers' D and Spearman per split and pooled, averaged over trials.
pub fn aggregate_score_traces(traces: &[ChainTrace], orientation: Orientation, step_level: bool) -> Vec<CorrelationRow> {
    let mut rows = Vec::new();
    let methods: BTreeSet<ScoringMethod> = traces.iter().map(|t| t.method).collect();
    let trials: BTreeSet<u32> = traces.iter().map(|t| t.trial).collect();
    let splits: BTreeSet<Split> = traces.iter().map(|t| t.split).collect();
    let mut levels = vec![CorrelationLevel::Chain];
    if step_level {
        levels.push(CorrelationLevel::Step);
    }
    for method in methods {
        for &level in &levels {
            if level == CorrelationLevel::Step && method == ScoringMethod::Holistic {
                continue;
            }
            let scopes: Vec<(String, Option<Split>)> = splits
                .iter()
                .map(|s| (s.to_string(), Some(*s)))
                .chain([("Overall".to_string(), None)])
                .collect();
            for (scope, split) in scopes {
                let samples: Vec<PairedSample> = trials
                    .iter()
                    .map(|&trial| {
                        let chains = traces
                            .iter()
                            .filter(|t| t.method == method && t.trial == trial && split.is_none_or(|s| t.split == s));
                        let items = match level {
                            CorrelationLevel::Chain => chains
                                .map(|t| PairedItem {
                                    reference: t.reference,
                                    prediction: t.value,
                                    invalid: t.invalid,
                                })
                                .collect(),
                            CorrelationLevel::Step => chains
                                .flat_map(|t| t.steps.iter())
                                .filter_map(|s| {
                                    s.reference.map(|reference| PairedItem {
                                        reference,
                                        prediction: s.value,
                                        invalid: s.invalid,
                                    })
                                })
                                .collect(),
                        };
                        PairedSample::new(items)
                    })
                    .collect();
                let (somers_d, somers_note, spearman, spearman_note) = correlate(&samples, orientation);
                rows.push(CorrelationRow {
                    method,
                    level,
                    scope,
                    items: samples.first().map_or(0, PairedSample::len),
                    somers_d,
                    somers_note,
                    spearman,
                    spearman_note,
                });
            }
        }
    }
    rows
}

pub fn score_invalid_summary(traces: &[ChainTrace]) -> InvalidSummary {
    let outputs = traces.iter().map(|t| t.calls.len()).sum();
    let invalid = traces.iter().flat_map(|t| &t.calls).filter(|c| c.invalid).count();
    invalid_summary(outputs, invalid)
}

pub fn run_scoring(
    cfg: &ExperimentConfig,
    records: &[McotRecord],
    backend: &dyn JudgeBackend,
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let recs = evaluable(records, cfg.split);
    if recs.is_empty() {
        return Err(ExperimentError::NoItems);
    }
    let mut report = ExperimentReport::new(ReportKind::Scoring, cfg, backend);
    report.score_traces = score_records(cfg, &recs, backend).map_err(|e| abort(e, &report))?;
    report.recompute();
    Ok(report)
}

fn abort(e: ExperimentError, report: &ExperimentReport) -> ExperimentError {
    match e {
        ExperimentError::Judge(source) => ExperimentError::Aborted {
            source,
            partial: Box::new(report.clone()),
        },
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Choice ranking

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTrace {
    pub question_key: String,
    pub split: Split,
    pub trial: u32,
    pub options: Vec<String>,
    pub scores: Vec<f64>,
    pub gold: Vec<bool>,
    pub picked: usize,
    /// Several options shared the top score; the lowest index was taken.
    pub tie: bool,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingSummary {
    pub method: ScoringMethod,
    pub questions: usize,
    pub accuracy: f64,
    pub ties: usize,
}

/// Index of the highest score (lowest index on ties) and whether a tie occurred.
pub fn select_option(scores: &[f64]) -> (usize, bool) {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let tie = scores.iter().filter(|&&s| s == scores[best]).count() > 1;
    (best, tie)
}

pub fn aggregate_ranking_traces(traces: &[RankingTrace], method: ScoringMethod) -> Option<RankingSummary> {
    let trials: BTreeSet<u32> = traces.iter().map(|t| t.trial).collect();
    let first = *trials.iter().next()?;
    let accs: Vec<f64> = trials
        .iter()
        .map(|&tr| {
            let rows: Vec<&RankingTrace> = traces.iter().filter(|t| t.trial == tr).collect();
            rows.iter().filter(|t| t.correct).count() as f64 / rows.len() as f64
        })
        .collect();
    Some(RankingSummary {
        method,
        questions: traces.iter().filter(|t| t.trial == first).count(),
        accuracy: trial_mean(&accs)?,
        ties: traces.iter().filter(|t| t.tie).count(),
    })
}

pub fn run_choice_ranking(
    cfg: &ExperimentConfig,
    records: &[McotRecord],
    backend: &dyn JudgeBackend,
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let recs = evaluable(records, cfg.split);
    let owned: Vec<McotRecord> = recs.iter().map(|r| (*r).clone()).collect();
    let set = export_ranking_set(&owned);
    if set.groups.is_empty() {
        return Err(ExperimentError::EmptyRankingSet);
    }
    let members: BTreeSet<&str> = set
        .groups
        .iter()
        .flat_map(|g| g.options.iter().map(|o| o.record_id.as_str()))
        .collect();
    let scored: Vec<&McotRecord> = recs.into_iter().filter(|r| members.contains(r.id.as_str())).collect();

    let mut report = ExperimentReport::new(ReportKind::Ranking, cfg, backend);
    report
        .metadata
        .insert("ranking_dropped_groups".into(), set.dropped.len().to_string());
    let chains = score_records(cfg, &scored, backend).map_err(|e| abort(e, &report))?;
    let value: HashMap<(&str, u32), f64> = chains.iter().map(|c| ((c.record_id.as_str(), c.trial), c.value)).collect();
    let mut ranking = Vec::new();
    for trial in 0..cfg.trials {
        for g in &set.groups {
            let scores: Vec<f64> = g.options.iter().map(|o| value[&(o.record_id.as_str(), trial)]).collect();
            let (picked, tie) = select_option(&scores);
            ranking.push(RankingTrace {
                question_key: g.question_key.clone(),
                split: g.split,
                trial,
                options: g.options.iter().map(|o| o.record_id.clone()).collect(),
                scores,
                gold: g.options.iter().map(|o| o.mcot_correct).collect(),
                picked,
                tie,
                correct: g.options[picked].mcot_correct,
            });
        }
    }
    report.score_traces = chains;
    report.ranking_traces = ranking;
    report.recompute();
    Ok(report)
}

/// Recomputes a chain value from its step components scaled by `factor`.
pub fn rescored_value(trace: &ChainTrace, factor: f64) -> Result<f64, MetricsError> {
    match trace.method {
        ScoringMethod::Holistic => Ok(trace.value * factor),
        ScoringMethod::StepwisePlain => {
            let values: Vec<f64> = trace.steps.iter().map(|s| s.value * factor).collect();
            geo_mean(&values)
        }
        ScoringMethod::MiCEvalType | ScoringMethod::MiCEvalAll => {
            let mut values = Vec::with_capacity(trace.steps.len());
            for s in &trace.steps {
                let c = s.components.scaled(factor);
                values.push(match (trace.method, s.step_type) {
                    (ScoringMethod::MiCEvalAll, _) => step_correctness_all(&c)?,
                    (_, Some(t)) => step_correctness_typed(t, &c)?,
                    (_, None) => 0.0,
                });
            }
            geo_mean(&values)
        }
    }
}

// ---------------------------------------------------------------------------
// Gold-echo judge

/// A judge that answers every request from the gold labels, for fixtures and
/// sanity checks. Scores are the human reference mapping times ten; criteria
/// that do not apply to the gold step type score 10.
pub struct GoldEchoBackend {
    records: HashMap<String, McotRecord>,
    mode: RelevanceMode,
}

impl GoldEchoBackend {
    pub fn new(records: &[McotRecord], mode: RelevanceMode) -> Self {
        Self {
            records: records.iter().map(|r| (r.id.clone(), r.clone())).collect(),
            mode,
        }
    }

    fn answer(&self, bundle: &PromptBundle) -> Option<String> {
        let record = self.records.get(&bundle.record_id)?;
        let gold = record.valid_gold()?;
        let ten = |x: f64| format!("{}", (x * 10.0).round() as i64);
        match bundle.task {
            JudgeTask::Label(task) => gold_items(record, task)
                .into_iter()
                .find(|(s, _)| *s == bundle.step_index)
                .map(|(_, label)| answer_text(task, &label)),
            JudgeTask::McotScore => Some(if gold.mcot_correct { "10" } else { "0" }.into()),
            JudgeTask::StepScore => {
                let step = gold.step(bundle.step_index)?;
                step_reference(ScoringMethod::StepwisePlain, step, self.mode).ok()?.map(ten)
            }
            JudgeTask::DimensionScore(d) => {
                let step = gold.step(bundle.step_index)?;
                let task = d.reference_task();
                match step.label(task) {
                    Some(label) => human_reference_score(task, label, self.mode).ok().map(ten),
                    None => Some("10".into()),
                }
            }
        }
    }
}

impl JudgeBackend for GoldEchoBackend {
    fn complete(&self, request: &crate::judge::backend::JudgeRequest<'_>) -> Result<String, JudgeError> {
        Ok(self.answer(request.bundle).unwrap_or_else(|| "N/A".into()))
    }

    fn describe(&self) -> String {
        "gold-echo".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_option_breaks_ties_low() {
        assert_eq!(select_option(&[0.9, 0.4]), (0, false));
        assert_eq!(select_option(&[0.4, 0.9, 0.9]), (1, true));
        assert_eq!(select_option(&[0.5]), (0, false));
    }

    #[test]
    fn trial_mean_is_exact_on_agreement() {
        let x = 0.1 + 0.2;
        assert_eq!(trial_mean(&[x, x, x]), Some(x));
        assert_eq!(trial_mean(&[0.0, 1.0]), Some(0.5));
        assert_eq!(trial_mean(&[]), None);
    }
}

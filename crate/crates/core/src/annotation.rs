//! Gold-label aggregation, validity filtering and inter-rater agreement.
//!
//! Votes on every (step, task) are aggregated by strict plurality. A step
//! whose step-type vote is unanimous is invalid if any subtask ties; when the
//! step type is a 2:1 majority only the two majority raters' subtask votes are
//! counted and any 1:1 split invalidates the step. A chain is invalid if it
//! contains an invalid step, or if half or more of its steps have a 2:1
//! step-type tally.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    self, ChainValidity, Correctness, DescCorrectness, GoldChain, GoldStepLabel, LabelTask,
    McotRecord, ModelError, RelevanceMode, Split, StepType, StepValidity,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotationError {
    #[error("no {task} votes for step {step_index}")]
    EmptyVoteSet { task: LabelTask, step_index: usize },
    #[error("step {step_index} is missing required {task} votes")]
    MissingSubtask { step_index: usize, task: LabelTask },
    #[error("annotator {annotator} voted twice on {task} for step {step_index}")]
    DuplicateVoter {
        annotator: String,
        task: LabelTask,
        step_index: usize,
    },
    #[error("label {label:?} is outside the {task} domain")]
    LabelOutsideDomain { task: LabelTask, label: String },
    #[error("record {id} is not valid gold data")]
    InvalidRecord { id: String },
    #[error("agreement needs k >= 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("agreement item {item} has {labels} labels; at least 2 are needed")]
    TooFewRaters { item: usize, labels: usize },
    #[error("agreement needs at least one item")]
    NoItems,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// All votes cast on one task for one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteSet {
    pub task: LabelTask,
    pub step_index: usize,
    /// `(annotator_id, label)` pairs.
    pub votes: Vec<(String, String)>,
}

impl VoteSet {
    pub fn new(task: LabelTask, step_index: usize) -> Self {
        Self {
            task,
            step_index,
            votes: Vec::new(),
        }
    }

    pub fn with_votes<A: Into<String>, L: Into<String>>(
        task: LabelTask,
        step_index: usize,
        votes: impl IntoIterator<Item = (A, L)>,
    ) -> Self {
        Self {
            task,
            step_index,
            votes: votes.into_iter().map(|(a, l)| (a.into(), l.into())).collect(),
        }
    }

    fn restricted_to(&self, raters: &BTreeSet<&str>) -> VoteSet {
        VoteSet {
            task: self.task,
            step_index: self.step_index,
            votes: self
                .votes
                .iter()
                .filter(|(a, _)| raters.contains(a.as_str()))
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregateResult {
    Majority(String),
    Tie,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationOutcome {
    pub result: AggregateResult,
    pub tally: BTreeMap<String, usize>,
}

impl AggregationOutcome {
    pub fn majority(&self) -> Option<&str> {
        match &self.result {
            AggregateResult::Majority(label) => Some(label),
            AggregateResult::Tie => None,
        }
    }

    pub fn is_unanimous(&self) -> bool {
        self.tally.len() == 1
    }

    /// Counts in descending order joined by ':' (a single label renders as `n:0`).
    pub fn tally_string(&self) -> String {
        let mut counts: Vec<usize> = self.tally.values().copied().collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        if counts.len() == 1 {
            counts.push(0);
        }
        counts.iter().map(usize::to_string).collect::<Vec<_>>().join(":")
    }
}

/// Strict-plurality vote. Invariant under vote order.
pub fn aggregate_votes(v: &VoteSet) -> Result<AggregationOutcome, AnnotationError> {
    if v.votes.is_empty() {
        return Err(AnnotationError::EmptyVoteSet {
            task: v.task,
            step_index: v.step_index,
        });
    }
    let mut voters = BTreeSet::new();
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for (annotator, label) in &v.votes {
        if !v.task.contains(label) {
            return Err(AnnotationError::LabelOutsideDomain {
                task: v.task,
                label: label.clone(),
            });
        }
        if !voters.insert(annotator.as_str()) {
            return Err(AnnotationError::DuplicateVoter {
                annotator: annotator.clone(),
                task: v.task,
                step_index: v.step_index,
            });
        }
        *tally.entry(label.clone()).or_default() += 1;
    }
    let max = tally.values().copied().max().unwrap_or(0);
    let mut leaders = tally.iter().filter(|(_, &c)| c == max);
    let result = match (leaders.next(), leaders.next()) {
        (Some((label, _)), None) => AggregateResult::Majority(label.clone()),
        _ => AggregateResult::Tie,
    };
    Ok(AggregationOutcome { result, tally })
}

/// Shape of the step-type vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeTally {
    /// Every rater chose the same type (3:0).
    Unanimous,
    /// Majority with dissent (2:1).
    Split,
    /// No majority (1:1:1 or 1:1).
    Tie,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepVerdict {
    Valid(GoldStepLabel),
    Invalid,
}

/// Result of classifying one step, with the evidence behind it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepClassification {
    pub step_index: usize,
    pub type_tally: TypeTally,
    /// Rendered step-type tally, e.g. `3:0` or `2:1`.
    pub type_counts: String,
    pub majority_type: Option<StepType>,
    pub verdict: StepVerdict,
    /// Tasks whose counted votes tied.
    pub ties: Vec<LabelTask>,
}

impl StepClassification {
    pub fn is_valid(&self) -> bool {
        matches!(self.verdict, StepVerdict::Valid(_))
    }

    /// Gold label for the step; invalid steps keep only their majority type.
    pub fn gold_label(&self) -> GoldStepLabel {
        match &self.verdict {
            StepVerdict::Valid(gold) => gold.clone(),
            StepVerdict::Invalid => GoldStepLabel {
                step_index: self.step_index,
                step_type: self.majority_type,
                validity: StepValidity::InvalidTie,
                ..GoldStepLabel::default()
            },
        }
    }
}

fn find_votes(subtask_votes: &[VoteSet], task: LabelTask) -> Option<&VoteSet> {
    subtask_votes.iter().find(|v| v.task == task)
}

/// Classifies one step as valid gold data or invalid.
pub fn classify_step_validity(
    step_type_votes: &VoteSet,
    subtask_votes: &[VoteSet],
) -> Result<StepClassification, AnnotationError> {
    let step_index = step_type_votes.step_index;
    let type_outcome = aggregate_votes(step_type_votes)?;
    let type_counts = type_outcome.tally_string();

    let Some(type_key) = type_outcome.majority() else {
        return Ok(StepClassification {
            step_index,
            type_tally: TypeTally::Tie,
            type_counts,
            majority_type: None,
            verdict: StepVerdict::Invalid,
            ties: vec![LabelTask::StepType],
        });
    };
    let step_type = StepType::from_key(type_key).ok_or_else(|| AnnotationError::LabelOutsideDomain {
        task: LabelTask::StepType,
        label: type_key.to_string(),
    })?;
    let type_tally = if type_outcome.is_unanimous() {
        TypeTally::Unanimous
    } else {
        TypeTally::Split
    };
    let majority_raters: BTreeSet<&str> = step_type_votes
        .votes
        .iter()
        .filter(|(_, label)| label == type_key)
        .map(|(a, _)| a.as_str())
        .collect();

    let counted = |task: LabelTask| -> Result<AggregationOutcome, AnnotationError> {
        let missing = AnnotationError::MissingSubtask { step_index, task };
        let votes = find_votes(subtask_votes, task).ok_or(missing.clone())?;
        let votes = match type_tally {
            TypeTally::Split => votes.restricted_to(&majority_raters),
            _ => votes.clone(),
        };
        if votes.votes.is_empty() {
            return Err(missing);
        }
        aggregate_votes(&votes)
    };

    let mut gold = GoldStepLabel::new(step_index, step_type);
    let mut ties = Vec::new();
    let mut settle = |task: LabelTask, gold: &mut GoldStepLabel| -> Result<(), AnnotationError> {
        match counted(task)?.result {
            AggregateResult::Majority(label) => gold.set_label(task, &label)?,
            AggregateResult::Tie => ties.push(task),
        }
        Ok(())
    };

    for &task in model::required_tasks(step_type) {
        settle(task, &mut gold)?;
    }
    if matches!(
        gold.desc_correctness,
        Some(DescCorrectness::PartiallyCorrect | DescCorrectness::Unsupported)
    ) {
        settle(LabelTask::DescErrorType, &mut gold)?;
    }
    if gold.logic_correctness == Some(Correctness::Incorrect) {
        settle(LabelTask::LogicErrorType, &mut gold)?;
    }

    let verdict = if ties.is_empty() {
        StepVerdict::Valid(gold)
    } else {
        StepVerdict::Invalid
    };
    Ok(StepClassification {
        step_index,
        type_tally,
        type_counts,
        majority_type: Some(step_type),
        verdict,
        ties,
    })
}

/// Why a chain was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvalidReason {
    InvalidStep,
    SplitStepTypes,
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InvalidReason::InvalidStep => "invalid-step",
            InvalidReason::SplitStepTypes => "split-step-types",
        })
    }
}

/// Chain-level validity from the per-step classifications.
pub fn classify_mcot_validity(steps: &[StepClassification]) -> (ChainValidity, Option<InvalidReason>) {
    if steps.iter().any(|s| !s.is_valid()) {
        return (ChainValidity::Invalid, Some(InvalidReason::InvalidStep));
    }
    let split = steps.iter().filter(|s| s.type_tally == TypeTally::Split).count();
    if !steps.is_empty() && split * 2 >= steps.len() {
        return (ChainValidity::Invalid, Some(InvalidReason::SplitStepTypes));
    }
    (ChainValidity::Valid, None)
}

/// Full aggregation outcome for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordAggregation {
    pub record_id: String,
    pub steps: Vec<StepClassification>,
    pub validity: ChainValidity,
    pub reason: Option<InvalidReason>,
    pub gold: GoldChain,
    pub prediction_correct: Option<bool>,
}

/// Groups a record's annotations into vote sets keyed by (step, task).
pub fn vote_sets(record: &McotRecord) -> BTreeMap<(usize, LabelTask), VoteSet> {
    let mut sets: BTreeMap<(usize, LabelTask), VoteSet> = BTreeMap::new();
    for a in &record.annotations {
        sets.entry((a.step_index, a.task))
            .or_insert_with(|| VoteSet::new(a.task, a.step_index))
            .votes
            .push((a.annotator_id.clone(), a.label.clone()));
    }
    sets
}

/// Aggregates every step of a record and applies the chain rules.
pub fn aggregate_record(record: &McotRecord, mode: RelevanceMode) -> Result<RecordAggregation, AnnotationError> {
    record.validate()?;
    let sets = vote_sets(record);
    let mut steps = Vec::with_capacity(record.steps.len());
    for step in &record.steps {
        let i = step.index;
        let type_votes = sets
            .get(&(i, LabelTask::StepType))
            .ok_or(AnnotationError::MissingSubtask {
                step_index: i,
                task: LabelTask::StepType,
            })?;
        let subtasks: Vec<VoteSet> = sets
            .range((i, LabelTask::StepType)..=(i, LabelTask::PredictionCorrectness))
            .filter(|((_, t), _)| *t != LabelTask::StepType)
            .map(|(_, v)| v.clone())
            .collect();
        steps.push(classify_step_validity(type_votes, &subtasks)?);
    }
    let (validity, reason) = classify_mcot_validity(&steps);
    let gold_steps: Vec<GoldStepLabel> = steps.iter().map(StepClassification::gold_label).collect();
    let mcot_correct = match validity {
        ChainValidity::Valid => model::derive_mcot_correct(&gold_steps, mode)?,
        ChainValidity::Invalid => false,
    };
    let prediction_correct = match sets.get(&(0, LabelTask::PredictionCorrectness)) {
        Some(v) => aggregate_votes(v)?
            .majority()
            .map(|label| label == Correctness::Correct.key()),
        None => record.prediction_correct,
    };
    Ok(RecordAggregation {
        record_id: record.id.clone(),
        steps,
        validity,
        reason,
        gold: GoldChain {
            steps: gold_steps,
            mcot_correct,
            validity,
            relevance_mode: mode,
        },
        prediction_correct,
    })
}

/// Gold chain for a valid record. The engine never re-derives logic
/// correctness from earlier steps; it keeps whatever the annotators agreed on.
pub fn derive_gold(record: &McotRecord, mode: RelevanceMode) -> Result<GoldChain, AnnotationError> {
    let agg = aggregate_record(record, mode)?;
    match agg.validity {
        ChainValidity::Valid => Ok(agg.gold),
        ChainValidity::Invalid => Err(AnnotationError::InvalidRecord { id: record.id.clone() }),
    }
}

/// Counts produced by [`aggregate_records`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub records: usize,
    pub valid_records: usize,
    pub invalid_records: usize,
    pub invalid_by_step: usize,
    pub invalid_by_split_types: usize,
    pub steps: usize,
    pub invalid_steps: usize,
    pub split_type_steps: usize,
    /// Tie counts per task over all steps.
    pub ties_by_task: BTreeMap<LabelTask, usize>,
    pub agreement: AgreementSummary,
}

/// Aggregates records in parallel; output is ordered by record id.
pub fn aggregate_records(
    records: &[McotRecord],
    mode: RelevanceMode,
) -> Result<(Vec<RecordAggregation>, ValidityReport), AnnotationError> {
    let mut aggs = records
        .par_iter()
        .map(|r| aggregate_record(r, mode))
        .collect::<Result<Vec<_>, _>>()?;
    aggs.sort_by(|a, b| a.record_id.cmp(&b.record_id));

    let mut report = ValidityReport {
        records: aggs.len(),
        agreement: agreement_summary(records)?,
        ..ValidityReport::default()
    };
    for agg in &aggs {
        match agg.reason {
            None => report.valid_records += 1,
            Some(InvalidReason::InvalidStep) => report.invalid_by_step += 1,
            Some(InvalidReason::SplitStepTypes) => report.invalid_by_split_types += 1,
        }
        for step in &agg.steps {
            report.steps += 1;
            report.invalid_steps += usize::from(!step.is_valid());
            report.split_type_steps += usize::from(step.type_tally == TypeTally::Split);
            for &task in &step.ties {
                *report.ties_by_task.entry(task).or_default() += 1;
            }
        }
    }
    report.invalid_records = report.records - report.valid_records;
    Ok((aggs, report))
}

/// Applies aggregation results to records (gold and prediction flag).
pub fn apply_gold(records: &mut [McotRecord], aggs: &[RecordAggregation]) {
    let by_id: BTreeMap<&str, &RecordAggregation> = aggs.iter().map(|a| (a.record_id.as_str(), a)).collect();
    for record in records {
        if let Some(agg) = by_id.get(record.id.as_str()) {
            record.gold = Some(agg.gold.clone());
            record.prediction_correct = agg.prediction_correct;
        }
    }
}

/// Plain-text rendering of aggregation outcomes, one block per record.
pub fn render_validity(aggs: &[RecordAggregation]) -> String {
    let mut out = String::new();
    for agg in aggs {
        match agg.reason {
            None => {
                let _ = writeln!(out, "{} valid mcot_correct={}", agg.record_id, agg.gold.mcot_correct);
            }
            Some(reason) => {
                let _ = writeln!(out, "{} invalid reason={}", agg.record_id, reason);
            }
        }
        for step in &agg.steps {
            let ty = step.majority_type.map(StepType::key).unwrap_or("?");
            let _ = write!(out, "  step {}: type={} tally={}", step.step_index, ty, step.type_counts);
            match &step.verdict {
                StepVerdict::Valid(gold) => {
                    out.push_str(" valid");
                    for task in LabelTask::ALL.iter().copied().filter(|t| *t != LabelTask::StepType) {
                        if let Some(label) = gold.label(task) {
                            let _ = write!(out, " {task}={label}");
                        }
                    }
                }
                StepVerdict::Invalid => {
                    let ties: Vec<&str> = step.ties.iter().map(|t| t.key()).collect();
                    let _ = write!(out, " invalid ties={}", ties.join(","));
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Bennett-Alpert-Goldstein S over a fixed category space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub s_score: f64,
    pub observed_agreement: f64,
    pub category_count: usize,
    pub item_count: usize,
    /// Largest number of raters seen on a single item.
    pub rater_count: usize,
}

fn pairwise_agreement<L: PartialEq>(labels: &[L]) -> f64 {
    let n = labels.len();
    let mut agree = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            agree += usize::from(labels[i] == labels[j]);
        }
    }
    agree as f64 / (n * (n - 1) / 2) as f64
}

/// `S = (P_o - 1/k) / (1 - 1/k)` with `P_o` the mean pairwise agreement per item.
pub fn bennett_s<L: PartialEq>(items: &[Vec<L>], k: usize) -> Result<AgreementReport, AnnotationError> {
    if k < 2 {
        return Err(AnnotationError::TooFewCategories(k));
    }
    if items.is_empty() {
        return Err(AnnotationError::NoItems);
    }
    let mut total = 0.0;
    for (i, labels) in items.iter().enumerate() {
        if labels.len() < 2 {
            return Err(AnnotationError::TooFewRaters {
                item: i,
                labels: labels.len(),
            });
        }
        total += pairwise_agreement(labels);
    }
    let observed = total / items.len() as f64;
    let chance = 1.0 / k as f64;
    Ok(AgreementReport {
        s_score: (observed - chance) / (1.0 - chance),
        observed_agreement: observed,
        category_count: k,
        item_count: items.len(),
        rater_count: items.iter().map(Vec::len).max().unwrap_or(0),
    })
}

/// S pooled over items with differing category counts: the mean of per-item
/// chance-corrected agreement. Equals [`bennett_s`] when k is constant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PooledAgreement {
    pub s_score: f64,
    pub observed_agreement: f64,
    pub item_count: usize,
}

#[derive(Debug, Clone, Default)]
struct PoolAccumulator {
    s_sum: f64,
    po_sum: f64,
    items: usize,
}

impl PoolAccumulator {
    fn add(&mut self, labels: &[String], k: usize) {
        let po = pairwise_agreement(labels);
        let chance = 1.0 / k as f64;
        self.s_sum += (po - chance) / (1.0 - chance);
        self.po_sum += po;
        self.items += 1;
    }

    fn finish(&self) -> Option<PooledAgreement> {
        (self.items > 0).then(|| PooledAgreement {
            s_score: self.s_sum / self.items as f64,
            observed_agreement: self.po_sum / self.items as f64,
            item_count: self.items,
        })
    }
}

/// Agreement per task, per task group and per split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub per_task: BTreeMap<LabelTask, AgreementReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_tasks: Option<PooledAgreement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_tasks: Option<PooledAgreement>,
    pub per_split: BTreeMap<Split, PooledAgreement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overall: Option<PooledAgreement>,
}

/// Computes S over every (record, step, task) vote set with at least two votes.
pub fn agreement_summary(records: &[McotRecord]) -> Result<AgreementSummary, AnnotationError> {
    let mut per_task_items: BTreeMap<LabelTask, Vec<Vec<String>>> = BTreeMap::new();
    let mut desc = PoolAccumulator::default();
    let mut logic = PoolAccumulator::default();
    let mut overall = PoolAccumulator::default();
    let mut splits: BTreeMap<Split, PoolAccumulator> = BTreeMap::new();

    let mut ordered: Vec<&McotRecord> = records.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    for record in ordered {
        for ((_, task), set) in vote_sets(record) {
            if set.votes.len() < 2 {
                continue;
            }
            let labels: Vec<String> = set.votes.into_iter().map(|(_, l)| l).collect();
            let k = task.domain().len();
            if task.is_description() {
                desc.add(&labels, k);
            } else if task.is_logic() {
                logic.add(&labels, k);
            }
            overall.add(&labels, k);
            splits.entry(record.split).or_default().add(&labels, k);
            per_task_items.entry(task).or_default().push(labels);
        }
    }
    let mut summary = AgreementSummary {
        description_tasks: desc.finish(),
        reasoning_tasks: logic.finish(),
        overall: overall.finish(),
        ..AgreementSummary::default()
    };
    for (task, items) in per_task_items {
        summary.per_task.insert(task, bennett_s(&items, task.domain().len())?);
    }
    for (split, acc) in splits {
        if let Some(p) = acc.finish() {
            summary.per_split.insert(split, p);
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs(task: LabelTask, step: usize, labels: &[&str]) -> VoteSet {
        VoteSet::with_votes(
            task,
            step,
            labels.iter().enumerate().map(|(i, l)| (format!("a{}", i + 1), *l)),
        )
    }

    #[test]
    fn aggregate_examples() {
        let out = aggregate_votes(&vs(LabelTask::StepType, 1, &["Description"; 3])).unwrap();
        assert_eq!(out.majority(), Some("Description"));

        let out = aggregate_votes(&vs(LabelTask::StepType, 1, &["Description", "Reasoning", "Both"])).unwrap();
        assert_eq!(out.result, AggregateResult::Tie);
        assert_eq!(out.tally_string(), "1:1:1");

        let out = aggregate_votes(&vs(LabelTask::StepType, 1, &["Both", "Both", "Reasoning"])).unwrap();
        assert_eq!(out.majority(), Some("Both"));
        assert_eq!(out.tally.get("Both"), Some(&2));
        assert_eq!(out.tally.get("Reasoning"), Some(&1));
        assert_eq!(out.tally_string(), "2:1");
    }

    #[test]
    fn aggregate_errors() {
        assert!(matches!(
            aggregate_votes(&VoteSet::new(LabelTask::StepType, 1)),
            Err(AnnotationError::EmptyVoteSet { .. })
        ));
        assert!(matches!(
            aggregate_votes(&vs(LabelTask::LogicCorrectness, 1, &["Maybe"])),
            Err(AnnotationError::LabelOutsideDomain { .. })
        ));
        let dup = VoteSet::with_votes(LabelTask::StepType, 1, [("a", "Both"), ("a", "Both")]);
        assert!(matches!(aggregate_votes(&dup), Err(AnnotationError::DuplicateVoter { .. })));
    }

    #[test]
    fn unanimous_type_with_unanimous_subtasks_is_valid() {
        let c = classify_step_validity(
            &vs(LabelTask::StepType, 1, &["Description"; 3]),
            &[
                vs(LabelTask::DescCorrectness, 1, &["FullyCorrect"; 3]),
                vs(LabelTask::DescRelevance, 1, &["Both"; 3]),
            ],
        )
        .unwrap();
        assert_eq!(c.type_tally, TypeTally::Unanimous);
        let StepVerdict::Valid(gold) = c.verdict else { panic!("expected valid") };
        assert_eq!(gold.desc_correctness, Some(DescCorrectness::FullyCorrect));
    }

    #[test]
    fn three_way_subtask_tie_invalidates() {
        let c = classify_step_validity(
            &vs(LabelTask::StepType, 1, &["Description"; 3]),
            &[
                vs(LabelTask::DescCorrectness, 1, &["FullyCorrect"; 3]),
                vs(LabelTask::DescRelevance, 1, &["Both", "ImageRelevant", "None"]),
            ],
        )
        .unwrap();
        assert_eq!(c.verdict, StepVerdict::Invalid);
        assert_eq!(c.ties, vec![LabelTask::DescRelevance]);
    }

    #[test]
    fn split_type_counts_only_majority_raters() {
        // a1, a2 say Description; a3 says Reasoning. a1/a2 split 1:1 on correctness.
        let c = classify_step_validity(
            &vs(LabelTask::StepType, 1, &["Description", "Description", "Reasoning"]),
            &[
                vs(LabelTask::DescCorrectness, 1, &["FullyCorrect", "PartiallyCorrect", "FullyCorrect"]),
                vs(LabelTask::DescRelevance, 1, &["Both", "Both", "Both"]),
            ],
        )
        .unwrap();
        assert_eq!(c.type_tally, TypeTally::Split);
        assert_eq!(c.verdict, StepVerdict::Invalid);
        assert_eq!(c.ties, vec![LabelTask::DescCorrectness]);
    }

    #[test]
    fn minority_rater_votes_are_ignored() {
        // Without filtering, a3's vote would break the tie in favour of FullyCorrect.
        let c = classify_step_validity(
            &vs(LabelTask::StepType, 1, &["Description", "Description", "Reasoning"]),
            &[
                vs(LabelTask::DescCorrectness, 1, &["FullyCorrect", "FullyCorrect", "Unsupported"]),
                vs(LabelTask::DescRelevance, 1, &["Both", "Both", "None"]),
            ],
        )
        .unwrap();
        assert!(c.is_valid());
    }

    #[test]
    fn missing_required_subtask_is_an_error() {
        let err = classify_step_validity(
            &vs(LabelTask::StepType, 2, &["Reasoning"; 3]),
            &[vs(LabelTask::LogicCorrectness, 2, &["Correct"; 3])],
        )
        .unwrap_err();
        assert_eq!(
            err,
            AnnotationError::MissingSubtask {
                step_index: 2,
                task: LabelTask::LogicRelevance
            }
        );
    }

    #[test]
    fn error_type_is_aggregated_only_for_failing_correctness() {
        let c = classify_step_validity(
            &vs(LabelTask::StepType, 1, &["Reasoning"; 3]),
            &[
                vs(LabelTask::LogicCorrectness, 1, &["Incorrect", "Incorrect", "Correct"]),
                vs(LabelTask::LogicRelevance, 1, &["Relevant"; 3]),
                vs(LabelTask::Informativeness, 1, &["Informative"; 3]),
                VoteSet::with_votes(LabelTask::LogicErrorType, 1, [("a1", "InterStep"), ("a2", "InterStep")]),
            ],
        )
        .unwrap();
        let StepVerdict::Valid(gold) = c.verdict else { panic!() };
        assert_eq!(gold.logic_error_type, Some(model::LogicErrorType::InterStep));
    }

    fn classification(tally: TypeTally, valid: bool) -> StepClassification {
        StepClassification {
            step_index: 1,
            type_tally: tally,
            type_counts: String::new(),
            majority_type: Some(StepType::Description),
            verdict: if valid {
                StepVerdict::Valid(GoldStepLabel::new(1, StepType::Description))
            } else {
                StepVerdict::Invalid
            },
            ties: vec![],
        }
    }

    #[test]
    fn chain_validity_rules() {
        use TypeTally::*;
        let steps: Vec<_> = [Unanimous, Unanimous, Split, Unanimous]
            .into_iter()
            .map(|t| classification(t, true))
            .collect();
        assert_eq!(classify_mcot_validity(&steps).0, ChainValidity::Valid);

        let steps: Vec<_> = [Unanimous, Split, Split, Unanimous]
            .into_iter()
            .map(|t| classification(t, true))
            .collect();
        assert_eq!(
            classify_mcot_validity(&steps),
            (ChainValidity::Invalid, Some(InvalidReason::SplitStepTypes))
        );

        let mut steps: Vec<_> = (0..4).map(|_| classification(Unanimous, true)).collect();
        steps[2] = classification(Unanimous, false);
        assert_eq!(
            classify_mcot_validity(&steps),
            (ChainValidity::Invalid, Some(InvalidReason::InvalidStep))
        );
    }

    #[test]
    fn bennett_examples() {
        let all_agree = vec![vec!["A", "A", "A"], vec!["B", "B", "B"]];
        assert_eq!(bennett_s(&all_agree, 3).unwrap().s_score, 1.0);

        let two_raters = vec![vec![1, 1], vec![0, 0], vec![1, 1], vec![1, 0]];
        let r = bennett_s(&two_raters, 2).unwrap();
        assert_eq!(r.observed_agreement, 0.75);
        assert_eq!(r.s_score, 0.5);

        let aab = vec![vec!["A", "A", "B"]; 5];
        let r = bennett_s(&aab, 2).unwrap();
        assert!((r.observed_agreement - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.s_score + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bennett_errors() {
        assert_eq!(bennett_s(&[vec![1, 1]], 1), Err(AnnotationError::TooFewCategories(1)));
        assert_eq!(
            bennett_s(&[vec![1, 1], vec![1]], 2),
            Err(AnnotationError::TooFewRaters { item: 1, labels: 1 })
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn aggregation_ignores_vote_order(labels in prop::collection::vec(0usize..3, 1..5), rot in 0usize..5) {
                let keys = StepType::KEYS;
                let votes: Vec<(String, String)> = labels.iter().enumerate()
                    .map(|(i, &l)| (format!("a{i}"), keys[l].to_string())).collect();
                let mut rotated = votes.clone();
                let len = rotated.len();
                rotated.rotate_left(rot % len);
                let a = aggregate_votes(&VoteSet { task: LabelTask::StepType, step_index: 1, votes }).unwrap();
                let b = aggregate_votes(&VoteSet { task: LabelTask::StepType, step_index: 1, votes: rotated }).unwrap();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn adding_an_invalid_step_invalidates(tallies in prop::collection::vec(prop::bool::ANY, 1..8)) {
                let mut steps: Vec<_> = tallies.iter()
                    .map(|&split| classification(if split { TypeTally::Split } else { TypeTally::Unanimous }, true))
                    .collect();
                steps.push(classification(TypeTally::Unanimous, false));
                prop_assert_eq!(classify_mcot_validity(&steps).0, ChainValidity::Invalid);
            }

            #[test]
            fn bennett_s_is_relabeling_and_permutation_invariant(
                items in prop::collection::vec(prop::collection::vec(0usize..4, 2..4), 1..20),
                perm_seed in 0usize..24,
                rot in 0usize..20,
            ) {
                let perms: Vec<[usize; 4]> = {
                    let mut out = Vec::new();
                    for a in 0..4 { for b in 0..4 { for c in 0..4 { for d in 0..4 {
                        let p = [a, b, c, d];
                        let mut s = p; s.sort();
                        if s == [0, 1, 2, 3] { out.push(p); }
                    }}}}
                    out
                };
                let perm = perms[perm_seed % perms.len()];
                let relabeled: Vec<Vec<usize>> = items.iter().map(|it| it.iter().map(|&l| perm[l]).collect()).collect();
                let mut rotated = items.clone();
                let len = rotated.len();
                rotated.rotate_left(rot % len);
                let base = bennett_s(&items, 4).unwrap();
                let r = bennett_s(&relabeled, 4).unwrap();
                let p = bennett_s(&rotated, 4).unwrap();
                prop_assert!((base.s_score - r.s_score).abs() < 1e-12);
                prop_assert!((base.s_score - p.s_score).abs() < 1e-12);
                prop_assert_eq!(base.s_score == 1.0, base.observed_agreement == 1.0);
            }
        }
    }
}

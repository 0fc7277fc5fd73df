//! The per-annotator stage machine.
//!
//! Every step starts with its type. The type selects the follow-up tasks, and
//! an annotator's own correctness answer decides whether the matching
//! error-type card appears. The two chain-level cards come after the last step.

use std::collections::BTreeMap;

use chaingrade_core::model::{Correctness, DescCorrectness};
use chaingrade_core::{LabelTask, StepType};

/// One annotator's answers on one record, keyed by `(step_index, task)`.
pub type AnswerMap = BTreeMap<(usize, LabelTask), String>;

/// A card position: step index (0 for chain-level tasks) and task.
pub type Stage = (usize, LabelTask);

fn description_path(answers: &AnswerMap, step: usize, out: &mut Vec<LabelTask>) {
    out.push(LabelTask::DescCorrectness);
    match answers.get(&(step, LabelTask::DescCorrectness)) {
        Some(label) if label != DescCorrectness::FullyCorrect.key() => out.push(LabelTask::DescErrorType),
        _ => {}
    }
    out.push(LabelTask::DescRelevance);
}

fn reasoning_path(answers: &AnswerMap, step: usize, out: &mut Vec<LabelTask>) {
    out.push(LabelTask::LogicCorrectness);
    if answers.get(&(step, LabelTask::LogicCorrectness)).map(String::as_str) == Some(Correctness::Incorrect.key()) {
        out.push(LabelTask::LogicErrorType);
    }
    out.push(LabelTask::LogicRelevance);
    out.push(LabelTask::Informativeness);
}

/// Tasks of one step in card order, as far as the answers so far determine them.
pub fn step_sequence(answers: &AnswerMap, step: usize) -> Vec<LabelTask> {
    let mut out = vec![LabelTask::StepType];
    let Some(step_type) = answers
        .get(&(step, LabelTask::StepType))
        .and_then(|k| StepType::from_key(k))
    else {
        return out;
    };
    match step_type {
        StepType::Description => description_path(answers, step, &mut out),
        StepType::Reasoning => reasoning_path(answers, step, &mut out),
        StepType::Both => {
            description_path(answers, step, &mut out);
            reasoning_path(answers, step, &mut out);
        }
    }
    out
}

/// The next card for an annotator on a record with `step_count` steps, or
/// `None` once the record is complete.
pub fn next_stage(step_count: usize, answers: &AnswerMap) -> Option<Stage> {
    for step in 1..=step_count {
        for task in step_sequence(answers, step) {
            if !answers.contains_key(&(step, task)) {
                return Some((step, task));
            }
        }
    }
    [LabelTask::McotCorrectness, LabelTask::PredictionCorrectness]
        .into_iter()
        .map(|t| (0, t))
        .find(|stage| !answers.contains_key(stage))
}

/// Replays a vote sequence from scratch, checking that each vote was the card
/// on offer at the time.
pub fn replay(step_count: usize, votes: &[(Stage, String)]) -> Result<AnswerMap, Stage> {
    let mut answers = AnswerMap::new();
    for (stage, label) in votes {
        if next_stage(step_count, &answers) != Some(*stage) {
            return Err(*stage);
        }
        answers.insert(*stage, label.clone());
    }
    Ok(answers)
}

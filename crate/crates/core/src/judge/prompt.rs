//! Prompt templates and bundle assembly.
//!
//! Templates live in `templates/*.txt` and use the placeholders `[image]`,
//! `[question]`, `[rationale]`, `[current step]`, `[previous steps]` and, for
//! per-criterion scoring, `[criterion]`. The image itself travels as a
//! reference on the bundle; the body shows `<image>` where it belongs.

use serde::{Deserialize, Serialize};

use super::shots::{Modality, ShotSet};
use super::{JudgeError, JudgeTask, PromptBundle, ShotDescriptor};
use crate::dataset::NO_IMAGE;
use crate::model::{Correctness, LabelTask, McotRecord, ScoreDimension};

pub const IMAGE_MARKER: &str = "<image>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    StepLevel,
    McotLevel,
}

#[derive(Debug, Clone, Copy)]
pub enum Setting<'a> {
    ZeroShot,
    FewShot(&'a ShotSet),
}

pub fn template(task: JudgeTask) -> &'static str {
    match task {
        JudgeTask::Label(t) => match t {
            LabelTask::StepType => include_str!("../../templates/step_type.txt"),
            LabelTask::DescCorrectness => include_str!("../../templates/desc_correctness.txt"),
            LabelTask::DescRelevance => include_str!("../../templates/desc_relevance.txt"),
            LabelTask::DescErrorType => include_str!("../../templates/desc_error_type.txt"),
            LabelTask::LogicCorrectness => include_str!("../../templates/logic_correctness.txt"),
            LabelTask::LogicRelevance => include_str!("../../templates/logic_relevance.txt"),
            LabelTask::Informativeness => include_str!("../../templates/informativeness.txt"),
            LabelTask::LogicErrorType => include_str!("../../templates/logic_error_type.txt"),
            LabelTask::McotCorrectness => include_str!("../../templates/mcot_correctness.txt"),
            LabelTask::PredictionCorrectness => include_str!("../../templates/prediction_correctness.txt"),
        },
        JudgeTask::McotScore => include_str!("../../templates/score_mcot.txt"),
        JudgeTask::StepScore => include_str!("../../templates/score_step.txt"),
        JudgeTask::DimensionScore(_) => include_str!("../../templates/score_dimension.txt"),
    }
}

pub fn system_prompt(task: JudgeTask) -> &'static str {
    let text = match task {
        JudgeTask::Label(_) => include_str!("../../templates/system/verifier.txt"),
        JudgeTask::McotScore => include_str!("../../templates/system/score_mcot.txt"),
        JudgeTask::StepScore => include_str!("../../templates/system/score_step.txt"),
        JudgeTask::DimensionScore(_) => include_str!("../../templates/system/score_dimension.txt"),
    };
    text.trim_end()
}

fn criterion(dim: ScoreDimension) -> &'static str {
    match dim {
        ScoreDimension::DescCorrect => "Description Correctness (does the step describe the image accurately?)",
        ScoreDimension::DescRelevant => {
            "Description Relevance (is the described content useful for answering the question?)"
        }
        ScoreDimension::LogicCorrect => {
            "Logic Correctness (does the step follow from the question and the earlier steps?)"
        }
        ScoreDimension::LogicRelevant => "Logic Relevance (does the step move the chain toward the answer?)",
        ScoreDimension::Info => "Informativeness (does the step add something the earlier steps did not state?)",
    }
}

/// Text a demonstration uses to state its gold answer, in the template's own wording.
pub fn answer_text(task: LabelTask, key: &str) -> String {
    if task == LabelTask::McotCorrectness {
        return if key == Correctness::Correct.key() { "Yes" } else { "No" }.to_string();
    }
    task.label_display(key).unwrap_or(key).to_string()
}

fn joined(record: &McotRecord, upto: usize) -> String {
    record.steps[..upto]
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders one template for one item. `with_image` controls whether the
/// `Image:` line is kept (textual demonstrations drop it).
pub fn render(task: JudgeTask, record: &McotRecord, step_index: usize, with_image: bool) -> String {
    let n = record.steps.len();
    let current = record.step_text(step_index).unwrap_or_default();
    let previous = joined(record, step_index.saturating_sub(1).min(n));
    let rationale = joined(record, n);
    let crit = match task {
        JudgeTask::DimensionScore(d) => criterion(d),
        _ => "",
    };
    template(task)
        .lines()
        .filter(|line| with_image || !line.starts_with("Image:"))
        .map(|line| {
            line.replace("[image]", IMAGE_MARKER)
                .replace("[question]", &record.question)
                .replace("[rationale]", &rationale)
                .replace("[current step]", current)
                .replace("[previous steps]", &previous)
                .replace("[criterion]", crit)
                .trim_end()
                .to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn has_image_line(task: JudgeTask) -> bool {
    template(task).lines().any(|l| l.starts_with("Image:"))
}

fn image_ref(record: &McotRecord) -> Option<String> {
    (record.image_ref != NO_IMAGE).then(|| record.image_ref.clone())
}

pub fn build_prompt(
    task: JudgeTask,
    record: &McotRecord,
    step_index: usize,
    setting: Setting<'_>,
    level: Level,
) -> Result<PromptBundle, JudgeError> {
    if task.level() != level {
        return Err(JudgeError::LevelMismatch {
            task: task.key(),
            level,
        });
    }
    let step_index = match level {
        Level::McotLevel => 0,
        Level::StepLevel => {
            if step_index == 0 || step_index > record.steps.len() {
                return Err(JudgeError::StepOutOfRange {
                    record: record.id.clone(),
                    step: step_index,
                });
            }
            step_index
        }
    };
    let uses_image = has_image_line(task);
    let mut blocks = Vec::new();
    let mut image_refs = Vec::new();
    let mut shots = Vec::new();
    if let Setting::FewShot(set) = setting {
        for demo in &set.demos {
            blocks.push(demo.text.clone());
            if uses_image && set.modality == Modality::Multimodal {
                image_refs.extend(demo.image_ref.clone());
            }
            shots.push(ShotDescriptor {
                record_id: demo.record_id.clone(),
                step_index: demo.step_index,
                label: demo.label.clone(),
            });
        }
    }
    blocks.push(render(task, record, step_index, true));
    if uses_image {
        image_refs.extend(image_ref(record));
    }
    Ok(PromptBundle {
        task,
        record_id: record.id.clone(),
        step_index,
        system: system_prompt(task).to_string(),
        body: blocks.join("\n\n"),
        image_refs,
        expected: task.expected(),
        shots,
    })
}

//! Label-balanced few-shot demonstration sampling.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prompt::{answer_text, render};
use super::{JudgeError, JudgeTask};
use crate::dataset::NO_IMAGE;
use crate::model::{Correctness, LabelTask, McotRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    #[default]
    Multimodal,
    Textual,
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "multimodal" => Ok(Modality::Multimodal),
            "textual" => Ok(Modality::Textual),
            _ => Err(format!("unknown modality {s:?}; expected multimodal or textual")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demo {
    pub record_id: String,
    pub step_index: usize,
    pub label: String,
    /// Rendered template followed by the answer line.
    pub text: String,
    pub image_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotSet {
    pub task: LabelTask,
    pub modality: Modality,
    pub seed: u64,
    pub demos: Vec<Demo>,
}

/// Gold-labelled items of a valid record for one task: `(step_index, label key)`.
/// Chain-level tasks use step index 0. Only labels present in the gold are
/// returned, so error-type tasks cover exactly the steps with a failing
/// correctness label.
pub fn gold_items(record: &McotRecord, task: LabelTask) -> Vec<(usize, String)> {
    let Some(gold) = record.valid_gold() else {
        return Vec::new();
    };
    let verdict = |ok: bool| {
        if ok {
            Correctness::Correct.key()
        } else {
            Correctness::Incorrect.key()
        }
        .to_string()
    };
    match task {
        LabelTask::McotCorrectness => vec![(0, verdict(gold.mcot_correct))],
        LabelTask::PredictionCorrectness => record.prediction_correct.map(|p| (0, verdict(p))).into_iter().collect(),
        _ => gold
            .steps
            .iter()
            .filter_map(|s| s.label(task).map(|l| (s.step_index, l.to_string())))
            .collect(),
    }
}

/// Draws `k` demonstrations whose per-label counts differ by at most one.
///
/// Each label gets `k / L` items and `k % L` labels, chosen at random, get one
/// more. Items from `exclude_record` are never used.
pub fn sample_shots(
    pool: &[McotRecord],
    task: LabelTask,
    k: usize,
    modality: Modality,
    seed: u64,
    exclude_record: Option<&str>,
) -> Result<ShotSet, JudgeError> {
    if !(1..=4).contains(&k) {
        return Err(JudgeError::ShotCount(k));
    }
    let mut by_label: BTreeMap<&str, Vec<(&McotRecord, usize)>> =
        task.domain().iter().map(|&key| (key, Vec::new())).collect();
    for record in pool {
        if Some(record.id.as_str()) == exclude_record {
            continue;
        }
        for (step, label) in gold_items(record, task) {
            if let Some(items) = by_label.get_mut(label.as_str()) {
                items.push((record, step));
            }
        }
    }
    let domain = task.domain();
    let base = k / domain.len();
    let extra = k % domain.len();

    let short: Vec<String> = domain
        .iter()
        .filter(|&&key| by_label[key].len() < base)
        .map(|s| s.to_string())
        .collect();
    let mut extra_candidates: Vec<&str> = domain
        .iter()
        .copied()
        .filter(|&key| by_label[key].len() > base)
        .collect();
    if !short.is_empty() || extra_candidates.len() < extra {
        let missing = if short.is_empty() {
            domain
                .iter()
                .filter(|&&key| by_label[key].len() <= base)
                .map(|s| s.to_string())
                .collect()
        } else {
            short
        };
        return Err(JudgeError::InfeasibleShots { task, k, missing });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    extra_candidates.shuffle(&mut rng);
    let mut chosen: Vec<(&McotRecord, usize, &str)> = Vec::with_capacity(k);
    for &key in domain {
        let want = base + usize::from(extra_candidates[..extra].contains(&key));
        let mut items = by_label[key].clone();
        items.shuffle(&mut rng);
        chosen.extend(items.into_iter().take(want).map(|(r, s)| (r, s, key)));
    }
    chosen.shuffle(&mut rng);

    let demos = chosen
        .into_iter()
        .map(|(record, step, key)| {
            let with_image = modality == Modality::Multimodal;
            let body = render(JudgeTask::Label(task), record, step, with_image);
            Demo {
                record_id: record.id.clone(),
                step_index: step,
                label: key.to_string(),
                text: format!("{body}\nAnswer: {}", answer_text(task, key)),
                image_ref: (with_image && record.image_ref != NO_IMAGE).then(|| record.image_ref.clone()),
            }
        })
        .collect();
    Ok(ShotSet {
        task,
        modality,
        seed,
        demos,
    })
}

//! Line-delimited dataset loading, split statistics and ranking-set export.
//!
//! Each line is one JSON object holding an [`McotRecord`] plus an optional
//! `schema_version` (currently only version 1 exists). Images are referenced
//! by `image_ref`; the placeholder [`NO_IMAGE`] marks image-free fixtures.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Correctness, DescCorrectness, McotRecord, ModelError, Split, StepType};

pub const SCHEMA_VERSION: u32 = 1;
pub const NO_IMAGE: &str = "no-image";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unsupported schema_version {version}")]
    UnsupportedSchema { line: usize, version: u64 },
    #[error("line {line}: record {id}: {source}")]
    Invalid {
        line: usize,
        id: String,
        source: ModelError,
    },
    #[error("line {line}: duplicate record id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("split {0} has no records with valid gold labels")]
    EmptySplit(Split),
    #[error("record {0} has no gold labels; aggregate it first")]
    MissingGold(String),
    #[error("failed to serialize record {id}: {message}")]
    Serialize { id: String, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemaMode {
    #[default]
    Strict,
    Repair,
}

/// A record dropped in [`SchemaMode::Repair`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    /// Hex sha256 of the raw file bytes.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<McotRecord>,
    pub provenance: Provenance,
    pub rejected: Vec<RejectedLine>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &McotRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn get(&self, id: &str) -> Option<&McotRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

pub fn load_dataset(path: impl AsRef<Path>, mode: SchemaMode) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|e| DatasetError::Malformed {
        line: 0,
        message: format!("file is not UTF-8: {e}"),
    })?;
    parse_dataset(&text, mode)
}

fn parse_line(line: usize, raw: &str) -> Result<McotRecord, DatasetError> {
    let mut value: serde_json::Value = serde_json::from_str(raw).map_err(|e| DatasetError::Malformed {
        line,
        message: e.to_string(),
    })?;
    let obj = value.as_object_mut().ok_or_else(|| DatasetError::Malformed {
        line,
        message: "expected a JSON object".into(),
    })?;
    if let Some(v) = obj.remove("schema_version") {
        let version = v.as_u64().ok_or_else(|| DatasetError::Malformed {
            line,
            message: "schema_version must be an integer".into(),
        })?;
        if version != u64::from(SCHEMA_VERSION) {
            return Err(DatasetError::UnsupportedSchema { line, version });
        }
    }
    let record: McotRecord = serde_json::from_value(value).map_err(|e| DatasetError::Malformed {
        line,
        message: e.to_string(),
    })?;
    record.validate().map_err(|source| DatasetError::Invalid {
        line,
        id: record.id.clone(),
        source,
    })?;
    Ok(record)
}

/// Parses dataset text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_dataset(text: &str, mode: SchemaMode) -> Result<Dataset, DatasetError> {
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut ids = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let outcome = parse_line(line, raw).and_then(|r| {
            if ids.contains(&r.id) {
                Err(DatasetError::DuplicateId { line, id: r.id })
            } else {
                Ok(r)
            }
        });
        match (outcome, mode) {
            (Ok(r), _) => {
                ids.insert(r.id.clone());
                records.push(r);
            }
            (Err(e), SchemaMode::Strict) => return Err(e),
            (Err(e), SchemaMode::Repair) => rejected.push(RejectedLine {
                line,
                reason: e.to_string(),
            }),
        }
    }
    Ok(Dataset {
        records,
        provenance: Provenance {
            schema_version: SCHEMA_VERSION,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        },
        rejected,
    })
}

/// Serializes records one per line.
pub fn write_records<W: Write>(records: &[McotRecord], mut out: W) -> Result<(), DatasetError> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| DatasetError::Serialize {
            id: r.id.clone(),
            message: e.to_string(),
        })?;
        writeln!(out, "{line}").map_err(|source| DatasetError::Io {
            path: "<output>".into(),
            source,
        })?;
    }
    Ok(())
}

pub fn save_records(records: &[McotRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_records(records, &mut buf)?;
    fs::write(path, buf).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub split: Split,
    pub questions: usize,
    pub mcot: usize,
    pub steps: usize,
    pub avg_steps: f64,
    pub description_steps: usize,
    pub reasoning_steps: usize,
    pub both_steps: usize,
    /// Steps whose description is fully correct.
    pub description_fully_correct: usize,
    /// Steps whose logic is correct.
    pub logic_fully_correct: usize,
    pub mcot_fully_correct: usize,
}

/// Table-style statistics over the gold-valid records of one split.
pub fn compute_split_stats(records: &[McotRecord], split: Split) -> Result<SplitStats, DatasetError> {
    let mut questions = HashSet::new();
    let mut stats = SplitStats {
        split,
        questions: 0,
        mcot: 0,
        steps: 0,
        avg_steps: 0.0,
        description_steps: 0,
        reasoning_steps: 0,
        both_steps: 0,
        description_fully_correct: 0,
        logic_fully_correct: 0,
        mcot_fully_correct: 0,
    };
    for r in records.iter().filter(|r| r.split == split) {
        let gold = r.gold.as_ref().ok_or_else(|| DatasetError::MissingGold(r.id.clone()))?;
        if !gold.is_valid() {
            continue;
        }
        questions.insert(r.question_key());
        stats.mcot += 1;
        stats.mcot_fully_correct += usize::from(gold.mcot_correct);
        for step in &gold.steps {
            stats.steps += 1;
            match step.step_type {
                Some(StepType::Description) => stats.description_steps += 1,
                Some(StepType::Reasoning) => stats.reasoning_steps += 1,
                Some(StepType::Both) => stats.both_steps += 1,
                None => {}
            }
            stats.description_fully_correct +=
                usize::from(step.desc_correctness == Some(DescCorrectness::FullyCorrect));
            stats.logic_fully_correct += usize::from(step.logic_correctness == Some(Correctness::Correct));
        }
    }
    if stats.mcot == 0 {
        return Err(DatasetError::EmptySplit(split));
    }
    stats.questions = questions.len();
    stats.avg_steps = stats.steps as f64 / stats.mcot as f64;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingOption {
    pub record_id: String,
    pub mcot_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingGroup {
    pub question_key: String,
    pub split: Split,
    /// Ordered by record id; the option index is the position here.
    pub options: Vec<RankingOption>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedGroup {
    pub question_key: String,
    pub options: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingSet {
    pub groups: Vec<RankingGroup>,
    pub dropped: Vec<DroppedGroup>,
}

/// Groups gold-valid records by question and keeps groups with at least one
/// correct and one incorrect option.
pub fn export_ranking_set(records: &[McotRecord]) -> RankingSet {
    let mut by_question: BTreeMap<&str, Vec<&McotRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.valid_gold().is_some()) {
        by_question.entry(r.question_key()).or_default().push(r);
    }
    let mut set = RankingSet::default();
    for (key, mut members) in by_question {
        members.sort_by(|a, b| a.id.cmp(&b.id));
        let options: Vec<RankingOption> = members
            .iter()
            .map(|r| RankingOption {
                record_id: r.id.clone(),
                mcot_correct: r.valid_gold().is_some_and(|g| g.mcot_correct),
            })
            .collect();
        let correct = options.iter().filter(|o| o.mcot_correct).count();
        if correct == 0 || correct == options.len() {
            set.dropped.push(DroppedGroup {
                question_key: key.to_string(),
                options: options.len(),
                correct,
            });
        } else {
            set.groups.push(RankingGroup {
                question_key: key.to_string(),
                split: members[0].split,
                options,
            });
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GoldChain, GoldStepLabel, RelevanceMode, Step, StepAnnotation};
    use crate::model::{ChainValidity, DescRelevance};

    fn record(id: &str) -> serde_json::Value {
        serde_json::json!({
            "id": id,
            "split": "Hard",
            "question": "How many apples?",
            "image_ref": NO_IMAGE,
            "steps": [{"index": 1, "text": "There are two apples."}],
            "annotations": [],
        })
    }

    fn jsonl(values: &[serde_json::Value]) -> String {
        values.iter().map(|v| format!("{v}\n")).collect()
    }

    #[test]
    fn loads_three_records() {
        let text = jsonl(&[record("a"), record("b"), record("c")]);
        let ds = parse_dataset(&text, SchemaMode::Strict).unwrap();
        assert_eq!(ds.records.len(), 3);
        assert_eq!(ds.provenance.schema_version, 1);
        assert_eq!(ds.provenance.sha256.len(), 64);
    }

    #[test]
    fn step_level_task_at_index_zero_is_rejected() {
        let mut bad = record("a");
        bad["annotations"] = serde_json::json!([
            {"annotator_id": "x", "step_index": 0, "task": "DescCorrectness", "label": "FullyCorrect"}
        ]);
        let err = parse_dataset(&jsonl(&[bad]), SchemaMode::Strict).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
        assert!(msg.contains("Description Correctness") || msg.contains("DescCorrectness"), "{msg}");
    }

    #[test]
    fn label_outside_domain_is_rejected() {
        let mut bad = record("a");
        bad["annotations"] = serde_json::json!([
            {"annotator_id": "x", "step_index": 1, "task": "StepType", "label": "Banana"}
        ]);
        assert!(matches!(
            parse_dataset(&jsonl(&[bad]), SchemaMode::Strict),
            Err(DatasetError::Invalid { .. })
        ));
    }

    #[test]
    fn duplicate_id_in_repair_mode() {
        let text = jsonl(&[record("a"), record("b"), record("a")]);
        let ds = parse_dataset(&text, SchemaMode::Repair).unwrap();
        assert_eq!(ds.records.len(), 2);
        assert_eq!(ds.rejected.len(), 1);
        assert_eq!(ds.rejected[0].line, 3);
        assert!(matches!(
            parse_dataset(&text, SchemaMode::Strict),
            Err(DatasetError::DuplicateId { line: 3, .. })
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\n{{not json\n", record("a"));
        match parse_dataset(&text, SchemaMode::Strict) {
            Err(DatasetError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_schema_version_is_rejected() {
        let mut v = record("a");
        v["schema_version"] = 7.into();
        assert!(matches!(
            parse_dataset(&jsonl(&[v]), SchemaMode::Strict),
            Err(DatasetError::UnsupportedSchema { version: 7, .. })
        ));
    }

    fn gold_record(id: &str, question: &str, steps: usize, good: bool) -> McotRecord {
        let gold_steps: Vec<GoldStepLabel> = (1..=steps)
            .map(|i| {
                let mut g = GoldStepLabel::new(i, StepType::Description);
                g.desc_correctness = Some(if good || i > 1 {
                    DescCorrectness::FullyCorrect
                } else {
                    DescCorrectness::Unsupported
                });
                g.desc_relevance = Some(DescRelevance::Both);
                g
            })
            .collect();
        McotRecord {
            id: id.into(),
            split: Split::Normal,
            source_dataset: String::new(),
            question_id: None,
            image_ref: NO_IMAGE.into(),
            question: question.into(),
            steps: (1..=steps)
                .map(|i| Step {
                    index: i,
                    text: format!("step {i}"),
                })
                .collect(),
            generator: String::new(),
            annotations: Vec::<StepAnnotation>::new(),
            gold: Some(GoldChain {
                steps: gold_steps,
                mcot_correct: good,
                validity: ChainValidity::Valid,
                relevance_mode: RelevanceMode::Lenient,
            }),
            prediction_correct: None,
        }
    }

    #[test]
    fn split_stats_single_record() {
        let s = compute_split_stats(&[gold_record("a", "q", 2, true)], Split::Normal).unwrap();
        assert_eq!((s.mcot, s.steps, s.questions), (1, 2, 1));
        assert_eq!(s.avg_steps, 2.0);
        assert_eq!(s.description_steps + s.reasoning_steps + s.both_steps, s.steps);
        assert!(matches!(
            compute_split_stats(&[gold_record("a", "q", 2, true)], Split::Hard),
            Err(DatasetError::EmptySplit(Split::Hard))
        ));
    }

    #[test]
    fn split_stats_require_gold() {
        let mut r = gold_record("a", "q", 1, true);
        r.gold = None;
        assert!(matches!(
            compute_split_stats(&[r], Split::Normal),
            Err(DatasetError::MissingGold(_))
        ));
    }

    #[test]
    fn ranking_groups_follow_the_mixed_rule() {
        let records = vec![
            gold_record("a1", "q1", 1, true),
            gold_record("a2", "q1", 1, false),
            gold_record("b1", "q2", 1, true),
            gold_record("b2", "q2", 1, true),
        ];
        let set = export_ranking_set(&records);
        assert_eq!(set.groups.len(), 1);
        assert_eq!(set.groups[0].options.len(), 2);
        assert_eq!(set.dropped.len(), 1);
        assert_eq!(set.dropped[0].question_key, "q2");
    }

    #[test]
    fn round_trip_is_record_wise_identical() {
        let records = vec![gold_record("a", "q", 2, true), gold_record("b", "q", 1, false)];
        let mut buf = Vec::new();
        write_records(&records, &mut buf).unwrap();
        let ds = parse_dataset(std::str::from_utf8(&buf).unwrap(), SchemaMode::Strict).unwrap();
        assert_eq!(ds.records, records);
    }

    #[test]
    fn split_stats_ignore_order() {
        let mut records: Vec<_> = (0..6)
            .map(|i| gold_record(&format!("r{i}"), &format!("q{}", i % 3), 1 + i % 3, i % 2 == 0))
            .collect();
        let a = compute_split_stats(&records, Split::Normal).unwrap();
        records.reverse();
        let b = compute_split_stats(&records, Split::Normal).unwrap();
        assert_eq!(a, b);
    }
}

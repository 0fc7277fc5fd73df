//! Vote store backed by an append-only log.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use chaingrade_core::annotation::{aggregate_votes, bennett_s, vote_sets, AggregateResult};
use chaingrade_core::dataset::NO_IMAGE;
use chaingrade_core::{LabelTask, McotRecord, StepAnnotation};
use serde::{Deserialize, Serialize};

use crate::stage::{next_stage, AnswerMap, Stage};

/// Records stop being handed out once this many annotators have started them.
pub const ANNOTATORS_PER_RECORD: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("annotator id {0:?} must be non-empty and must not contain ':'")]
    BadAnnotator(String),
    #[error("malformed card token {0:?}")]
    BadToken(String),
    #[error("unknown record {0:?}")]
    UnknownRecord(String),
    #[error("label {label:?} is outside the {task} domain")]
    OutsideDomain {
        task: LabelTask,
        label: String,
        allowed: Vec<String>,
    },
    #[error("card {token} is not on offer")]
    Stale { token: String },
    #[error("vote log line {line}: {reason}")]
    Log { line: usize, reason: String },
    #[error("vote log: {0}")]
    Io(#[from] io::Error),
}

/// Identifies one card: who answers which task on which step of which record.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CardToken {
    pub annotator: String,
    pub record_id: String,
    pub step_index: usize,
    pub task: LabelTask,
}

impl fmt::Display for CardToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.annotator, self.record_id, self.step_index, self.task)
    }
}

impl FromStr for CardToken {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StoreError::BadToken(s.to_string());
        let (annotator, rest) = s.split_once(':').ok_or_else(bad)?;
        let mut tail = rest.rsplitn(3, ':');
        let task = tail.next().and_then(LabelTask::from_key).ok_or_else(bad)?;
        let step_index = tail.next().and_then(|n| n.parse().ok()).ok_or_else(bad)?;
        let record_id = tail.next().filter(|r| !r.is_empty()).ok_or_else(bad)?;
        if annotator.is_empty() {
            return Err(bad());
        }
        Ok(Self {
            annotator: annotator.to_string(),
            record_id: record_id.to_string(),
            step_index,
            task,
        })
    }
}

/// One line of the vote log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedVote {
    pub seq: u64,
    pub annotator_id: String,
    pub record_id: String,
    pub step_index: usize,
    pub task: LabelTask,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOption {
    pub key: String,
    pub display: String,
}

impl LabelOption {
    fn new(task: LabelTask, key: &str) -> Self {
        Self {
            key: key.to_string(),
            display: task.label_display(key).unwrap_or(key).to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardContext {
    pub image_ref: String,
    pub question: String,
    /// Steps before the current one; the whole chain for chain-level cards.
    pub previous_steps: Vec<String>,
    pub current_step: Option<String>,
}

/// The correctness answer that opened an error-type card.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    pub task: LabelTask,
    pub label: LabelOption,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardProgress {
    pub record_cards_done: usize,
    pub records_done: usize,
    pub records_total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCard {
    pub token: String,
    pub record_id: String,
    pub step_index: usize,
    pub task: LabelTask,
    pub task_display: String,
    pub context: CardContext,
    pub allowed_labels: Vec<LabelOption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<Trigger>,
    pub progress: CardProgress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub token: String,
    pub record_id: String,
    pub step_index: usize,
    pub task: LabelTask,
    pub label: String,
    pub seq: u64,
    pub record_complete: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProgressReport {
    pub logged_votes: usize,
    pub seeded_votes: usize,
    pub per_task: BTreeMap<LabelTask, usize>,
    /// Vote sets with at least two votes whose majority is tied.
    pub ties: BTreeMap<LabelTask, usize>,
    /// Provisional Bennett S over vote sets with at least two votes.
    pub agreement: BTreeMap<LabelTask, f64>,
    /// Completed records per annotator.
    pub annotators: BTreeMap<String, usize>,
}

pub struct AnnotationStore {
    records: Vec<McotRecord>,
    index: HashMap<String, usize>,
    answers: BTreeMap<(String, usize), AnswerMap>,
    votes: Vec<LoggedVote>,
    acks: HashMap<String, Ack>,
    assigned: HashMap<String, usize>,
    cursor: usize,
    log: Option<File>,
}

fn check_annotator(id: &str) -> Result<(), StoreError> {
    if id.is_empty() || id.contains(':') {
        return Err(StoreError::BadAnnotator(id.to_string()));
    }
    Ok(())
}

impl AnnotationStore {
    /// Builds a store over `records`. Annotations already in the records count
    /// as earlier votes. If `log_path` exists its votes are replayed, and new
    /// votes are appended to it.
    pub fn open(mut records: Vec<McotRecord>, log_path: Option<&Path>) -> Result<Self, StoreError> {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let index = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        let mut store = Self {
            records,
            index,
            answers: BTreeMap::new(),
            votes: Vec::new(),
            acks: HashMap::new(),
            assigned: HashMap::new(),
            cursor: 0,
            log: None,
        };
        for (i, r) in store.records.iter().enumerate() {
            for a in &r.annotations {
                store
                    .answers
                    .entry((a.annotator_id.clone(), i))
                    .or_default()
                    .insert((a.step_index, a.task), a.label.clone());
            }
        }
        if let Some(path) = log_path {
            if path.exists() {
                store.replay_log(path)?;
            }
            store.log = Some(OpenOptions::new().create(true).append(true).open(path)?);
        }
        Ok(store)
    }

    fn replay_log(&mut self, path: &Path) -> Result<(), StoreError> {
        let reader = BufReader::new(File::open(path)?);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fail = |reason: String| StoreError::Log { line: i + 1, reason };
            let vote: LoggedVote = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
            let token = CardToken {
                annotator: vote.annotator_id.clone(),
                record_id: vote.record_id.clone(),
                step_index: vote.step_index,
                task: vote.task,
            };
            self.accept(&token, &vote.label).map_err(|e| fail(e.to_string()))?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[McotRecord] {
        &self.records
    }

    pub fn votes(&self) -> &[LoggedVote] {
        &self.votes
    }

    fn record_index(&self, id: &str) -> Result<usize, StoreError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| StoreError::UnknownRecord(id.to_string()))
    }

    fn stage_of(&self, annotator: &str, record: usize) -> Option<Stage> {
        let empty = AnswerMap::new();
        let answers = self.answers.get(&(annotator.to_string(), record)).unwrap_or(&empty);
        next_stage(self.records[record].steps.len(), answers)
    }

    fn started_by_others(&self, record: usize, annotator: &str) -> usize {
        let voted = self
            .answers
            .keys()
            .filter(|(a, r)| *r == record && a != annotator)
            .count();
        let pending = self
            .assigned
            .iter()
            .filter(|(a, r)| **r == record && a.as_str() != annotator && !self.answers.contains_key(&((*a).clone(), record)))
            .count();
        voted + pending
    }

    fn current_record(&mut self, annotator: &str) -> Option<usize> {
        if let Some(&r) = self.assigned.get(annotator) {
            if self.stage_of(annotator, r).is_some() {
                return Some(r);
            }
        }
        let started = self
            .answers
            .keys()
            .filter(|(a, _)| a == annotator)
            .map(|(_, r)| *r)
            .find(|&r| self.stage_of(annotator, r).is_some());
        if let Some(r) = started {
            self.assigned.insert(annotator.to_string(), r);
            return Some(r);
        }
        let n = self.records.len();
        for off in 0..n {
            let r = (self.cursor + off) % n;
            let untouched = !self.answers.contains_key(&(annotator.to_string(), r));
            if untouched && self.started_by_others(r, annotator) < ANNOTATORS_PER_RECORD {
                self.cursor = r + 1;
                self.assigned.insert(annotator.to_string(), r);
                return Some(r);
            }
        }
        self.assigned.remove(annotator);
        None
    }

    fn records_done(&self, annotator: &str) -> usize {
        self.answers
            .keys()
            .filter(|(a, r)| a == annotator && self.stage_of(annotator, *r).is_none())
            .count()
    }

    /// The next card for `annotator`, or `None` when nothing is left for them.
    pub fn next_task(&mut self, annotator: &str) -> Result<Option<TaskCard>, StoreError> {
        check_annotator(annotator)?;
        let Some(r) = self.current_record(annotator) else {
            return Ok(None);
        };
        let (step_index, task) = self
            .stage_of(annotator, r)
            .expect("current record is incomplete");
        let record = &self.records[r];
        let empty = AnswerMap::new();
        let answers = self.answers.get(&(annotator.to_string(), r)).unwrap_or(&empty);
        let trigger_task = match task {
            LabelTask::DescErrorType => Some(LabelTask::DescCorrectness),
            LabelTask::LogicErrorType => Some(LabelTask::LogicCorrectness),
            _ => None,
        };
        let trigger = trigger_task.and_then(|t| {
            answers.get(&(step_index, t)).map(|label| Trigger {
                task: t,
                label: LabelOption::new(t, label),
            })
        });
        let step_texts: Vec<String> = record.steps.iter().map(|s| s.text.clone()).collect();
        let (previous_steps, current_step) = if step_index == 0 {
            (step_texts, None)
        } else {
            (
                step_texts[..step_index - 1].to_vec(),
                Some(step_texts[step_index - 1].clone()),
            )
        };
        let token = CardToken {
            annotator: annotator.to_string(),
            record_id: record.id.clone(),
            step_index,
            task,
        };
        Ok(Some(TaskCard {
            token: token.to_string(),
            record_id: record.id.clone(),
            step_index,
            task,
            task_display: task.display().to_string(),
            context: CardContext {
                image_ref: record.image_ref.clone(),
                question: record.question.clone(),
                previous_steps,
                current_step,
            },
            allowed_labels: task.domain().iter().map(|k| LabelOption::new(task, k)).collect(),
            trigger,
            progress: CardProgress {
                record_cards_done: answers.len(),
                records_done: self.records_done(annotator),
                records_total: self.records.len(),
            },
        }))
    }

    /// Records a vote for the card named by `token`. Re-submitting an answered
    /// card with the same label returns the original acknowledgement.
    pub fn submit(&mut self, token: &str, label: &str) -> Result<Ack, StoreError> {
        let parsed: CardToken = token.parse()?;
        check_annotator(&parsed.annotator)?;
        if let Some(ack) = self.acks.get(token) {
            if ack.label == label {
                return Ok(ack.clone());
            }
        }
        self.accept(&parsed, label)
    }

    fn accept(&mut self, token: &CardToken, label: &str) -> Result<Ack, StoreError> {
        let r = self.record_index(&token.record_id)?;
        if !token.task.contains(label) {
            return Err(StoreError::OutsideDomain {
                task: token.task,
                label: label.to_string(),
                allowed: token.task.domain().iter().map(|s| s.to_string()).collect(),
            });
        }
        let stage = (token.step_index, token.task);
        if self.stage_of(&token.annotator, r) != Some(stage) {
            return Err(StoreError::Stale {
                token: token.to_string(),
            });
        }
        let vote = LoggedVote {
            seq: self.votes.len() as u64,
            annotator_id: token.annotator.clone(),
            record_id: token.record_id.clone(),
            step_index: token.step_index,
            task: token.task,
            label: label.to_string(),
        };
        if let Some(log) = &mut self.log {
            let mut line = serde_json::to_string(&vote).map_err(io::Error::other)?;
            line.push('\n');
            log.write_all(line.as_bytes())?;
            log.flush()?;
        }
        self.answers
            .entry((token.annotator.clone(), r))
            .or_default()
            .insert(stage, label.to_string());
        let complete = self.stage_of(&token.annotator, r).is_none();
        if complete && self.assigned.get(&token.annotator) == Some(&r) {
            self.assigned.remove(&token.annotator);
        }
        let ack = Ack {
            token: token.to_string(),
            record_id: token.record_id.clone(),
            step_index: token.step_index,
            task: token.task,
            label: label.to_string(),
            seq: vote.seq,
            record_complete: complete,
        };
        self.votes.push(vote);
        self.acks.insert(ack.token.clone(), ack.clone());
        Ok(ack)
    }

    /// A record with its seeded annotations followed by the logged votes.
    pub fn export_record(&self, id: &str) -> Result<McotRecord, StoreError> {
        let mut record = self.records[self.record_index(id)?].clone();
        record.annotations.extend(self.votes.iter().filter(|v| v.record_id == id).map(|v| StepAnnotation {
            annotator_id: v.annotator_id.clone(),
            step_index: v.step_index,
            task: v.task,
            label: v.label.clone(),
        }));
        Ok(record)
    }

    pub fn export_records(&self) -> Vec<McotRecord> {
        self.records
            .iter()
            .map(|r| self.export_record(&r.id).expect("record is indexed"))
            .collect()
    }

    pub fn progress(&self) -> ProgressReport {
        let mut report = ProgressReport {
            logged_votes: self.votes.len(),
            seeded_votes: self.records.iter().map(|r| r.annotations.len()).sum(),
            ..ProgressReport::default()
        };
        let mut items: BTreeMap<LabelTask, Vec<Vec<String>>> = BTreeMap::new();
        for record in self.export_records() {
            for ((_, task), set) in vote_sets(&record) {
                *report.per_task.entry(task).or_default() += set.votes.len();
                if set.votes.len() < 2 {
                    continue;
                }
                if let Ok(outcome) = aggregate_votes(&set) {
                    if outcome.result == AggregateResult::Tie {
                        *report.ties.entry(task).or_default() += 1;
                    }
                }
                items
                    .entry(task)
                    .or_default()
                    .push(set.votes.into_iter().map(|(_, l)| l).collect());
            }
        }
        for (task, items) in items {
            if let Ok(s) = bennett_s(&items, task.domain().len()) {
                report.agreement.insert(task, s.s_score);
            }
        }
        for (annotator, r) in self.answers.keys() {
            let done = usize::from(self.stage_of(annotator, *r).is_none());
            *report.annotators.entry(annotator.clone()).or_default() += done;
        }
        report
    }

    /// Resolves a record's image under `root`. `Ok(None)` means the record has no image.
    pub fn image_path(&self, id: &str, root: &Path) -> Result<Option<PathBuf>, StoreError> {
        let record = &self.records[self.record_index(id)?];
        if record.image_ref == NO_IMAGE {
            return Ok(None);
        }
        let rel = Path::new(&record.image_ref);
        if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
            return Err(StoreError::UnknownRecord(id.to_string()));
        }
        Ok(Some(root.join(rel)))
    }
}

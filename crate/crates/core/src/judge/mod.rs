//! Judge gateway: prompt assembly, few-shot sampling, backends and verdict parsing.

pub mod backend;
pub mod parse;
pub mod prompt;
pub mod shots;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LabelTask, ScoreDimension};

pub use backend::{ConstantBackend, JudgeBackend, RemoteBackend, RemoteConfig, ScriptEntry, ScriptedBackend};
pub use parse::{parse_components, parse_label, parse_score, parse_verdict};
pub use prompt::{build_prompt, Level, Setting};
pub use shots::{sample_shots, Demo, Modality, ShotSet};

pub const DEFAULT_RETRY_LIMIT: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeError {
    #[error("judge transport failure: {0}")]
    Transport(String),
    #[error("scripted judge has no entry for record {record} step {step} task {task} trial {trial}")]
    ScriptMiss {
        record: String,
        step: usize,
        task: String,
        trial: u32,
    },
    #[error("judge configuration error: {0}")]
    Config(String),
    #[error("{task} cannot be prompted at {level:?} level")]
    LevelMismatch { task: String, level: Level },
    #[error("record {record} has no step {step}")]
    StepOutOfRange { record: String, step: usize },
    #[error("shot count must be in 1..=4, got {0}")]
    ShotCount(usize),
    #[error("shot pool cannot supply a balanced {task} set of {k}; short labels: {missing:?}")]
    InfeasibleShots {
        task: LabelTask,
        k: usize,
        missing: Vec<String>,
    },
}

/// Anything a judge can be asked to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JudgeTask {
    Label(LabelTask),
    /// One 0-10 score for the whole chain.
    McotScore,
    /// One 0-10 score for the current step.
    StepScore,
    /// One 0-10 score for the current step on a single criterion.
    DimensionScore(ScoreDimension),
}

impl JudgeTask {
    /// Stable key used in scripted tables and traces.
    pub fn key(self) -> String {
        match self {
            JudgeTask::Label(t) => t.key().to_string(),
            JudgeTask::McotScore => "Score:Mcot".into(),
            JudgeTask::StepScore => "Score:Step".into(),
            JudgeTask::DimensionScore(d) => format!("Score:{}", d.key()),
        }
    }

    pub fn level(self) -> Level {
        match self {
            JudgeTask::Label(t) if t.is_chain_level() => Level::McotLevel,
            JudgeTask::McotScore => Level::McotLevel,
            _ => Level::StepLevel,
        }
    }

    pub fn expected(self) -> ExpectedOutput {
        match self {
            JudgeTask::Label(t) => ExpectedOutput::Labels(t),
            _ => ExpectedOutput::Score,
        }
    }
}

impl fmt::Display for JudgeTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for JudgeTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Score:Mcot" => Ok(JudgeTask::McotScore),
            "Score:Step" => Ok(JudgeTask::StepScore),
            _ => {
                if let Some(dim) = s.strip_prefix("Score:") {
                    ScoreDimension::from_key(dim)
                        .map(JudgeTask::DimensionScore)
                        .ok_or_else(|| format!("unknown score dimension {dim:?}"))
                } else {
                    s.parse().map(JudgeTask::Label)
                }
            }
        }
    }
}

/// What a valid response looks like.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpectedOutput {
    Labels(LabelTask),
    /// Integer 0..=10.
    Score,
    /// One `Name: n` line per dimension.
    Components(Vec<ScoreDimension>),
}

/// Identifies a demonstration inside a bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotDescriptor {
    pub record_id: String,
    pub step_index: usize,
    pub label: String,
}

/// A fully rendered judge request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub task: JudgeTask,
    pub record_id: String,
    /// 0 for chain-level bundles.
    pub step_index: usize,
    pub system: String,
    pub body: String,
    pub image_refs: Vec<String>,
    pub expected: ExpectedOutput,
    pub shots: Vec<ShotDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Label(String),
    Score10(u8),
    ComponentScores10(BTreeMap<ScoreDimension, u8>),
    Invalid,
}

impl Outcome {
    pub fn is_invalid(&self) -> bool {
        matches!(self, Outcome::Invalid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub outcome: Outcome,
    pub raw_text: String,
    pub attempts: u32,
}

/// Calls the backend until a response parses, at most `retry_limit + 1` times.
pub fn invoke(
    backend: &dyn JudgeBackend,
    bundle: &PromptBundle,
    retry_limit: u32,
    trial: u32,
) -> Result<JudgeVerdict, JudgeError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        let raw = backend.complete(&backend::JudgeRequest { bundle, attempt, trial })?;
        let outcome = parse_verdict(&raw, &bundle.expected);
        if !outcome.is_invalid() || attempt > retry_limit {
            return Ok(JudgeVerdict {
                outcome,
                raw_text: raw,
                attempts: attempt,
            });
        }
    }
}

/// Invokes every bundle with at most `max_in_flight` concurrent calls.
/// Results come back in input order.
pub fn invoke_all(
    backend: &dyn JudgeBackend,
    bundles: &[PromptBundle],
    retry_limit: u32,
    trial: u32,
    max_in_flight: usize,
) -> Vec<Result<JudgeVerdict, JudgeError>> {
    let run = || {
        bundles
            .par_iter()
            .map(|b| invoke(backend, b, retry_limit, trial))
            .collect::<Vec<_>>()
    };
    match rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => bundles.iter().map(|b| invoke(backend, b, retry_limit, trial)).collect(),
    }
}

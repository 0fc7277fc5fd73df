//! Domain vocabulary shared by every other module.
//!
//! An MCoT record is an image reference, a question and an ordered reasoning
//! chain of `n >= 1` steps. Annotators label each step along a fixed set of
//! tasks ([`LabelTask`]); the label domain of every task is closed, and the
//! typed label enums below are the only values a gold label can take.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Schema-level violations of the domain model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("reasoning chain must contain at least one step")]
    EmptyChain,
    #[error("step indices must be 1..n contiguous: expected {expected}, found {found}")]
    NonContiguousSteps { expected: usize, found: usize },
    #[error("{task} annotation references missing step {step_index}")]
    UnknownStep { task: LabelTask, step_index: usize },
    #[error("{task} is a step-level task but was attached to step index 0")]
    StepTaskAtChainLevel { task: LabelTask },
    #[error("{task} is a chain-level task and must use step index 0, got {step_index}")]
    ChainTaskAtStepLevel { task: LabelTask, step_index: usize },
    #[error("label {label:?} is outside the {task} domain")]
    LabelOutsideDomain { task: LabelTask, label: String },
    #[error("duplicate {task} annotation by {annotator} on step {step_index}")]
    DuplicateAnnotation {
        annotator: String,
        step_index: usize,
        task: LabelTask,
    },
    #[error("step {step_index} is missing its {task} label")]
    MissingLabel { step_index: usize, task: LabelTask },
    #[error("step {step_index} carries a {task} label not applicable to its type")]
    UnexpectedLabel { step_index: usize, task: LabelTask },
    #[error("step {step_index} is not valid gold data")]
    InvalidStep { step_index: usize },
    #[error("gold chain has {found} steps but the record has {expected}")]
    GoldLengthMismatch { expected: usize, found: usize },
    #[error("gold mcot_correct={stored} disagrees with the step labels ({derived})")]
    InconsistentChainVerdict { stored: bool, derived: bool },
}

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $display:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const KEYS: &'static [&'static str] = &[$(stringify!($variant)),+];

            /// Canonical identifier used in datasets and reports.
            pub fn key(self) -> &'static str {
                match self {
                    $($name::$variant => stringify!($variant)),+
                }
            }

            /// Human-facing wording used in prompts and annotation cards.
            pub fn display(self) -> &'static str {
                match self {
                    $($name::$variant => $display),+
                }
            }

            pub fn from_key(key: &str) -> Option<Self> {
                match key {
                    $(stringify!($variant) => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.key())
            }
        }
    };
}

label_enum!(
    /// Whether a step describes the image, reasons beyond it, or both.
    StepType {
        Description => "Description",
        Reasoning => "Reasoning",
        Both => "Both",
    }
);

label_enum!(
    DescCorrectness {
        FullyCorrect => "Fully Correct",
        PartiallyCorrect => "Partially Correct",
        Unsupported => "Unsupported",
    }
);

label_enum!(
    DescRelevance {
        ImageRelevant => "Image Relevant",
        LogicRelevant => "Logic Relevant",
        Both => "Both",
        None => "None",
    }
);

label_enum!(
    DescErrorType {
        EntityFalse => "Entity False",
        AttributeFalse => "Attribute False",
        SpatialRelFalse => "Spatial Relationship False",
        NonSpatialRelFalse => "Non-spatial Relationship False",
    }
);

label_enum!(
    /// Binary verdict shared by logic correctness, chain correctness and
    /// prediction correctness.
    Correctness {
        Correct => "Correct",
        Incorrect => "Incorrect",
    }
);

label_enum!(
    LogicRelevance {
        Relevant => "Relevant",
        Irrelevant => "Irrelevant",
    }
);

label_enum!(
    Informativeness {
        Informative => "Informative",
        Uninformative => "Uninformative",
    }
);

label_enum!(
    LogicErrorType {
        InterStep => "Inter-step Incorrect",
        IntraStep => "Intra-step Incorrect",
        Both => "Both",
    }
);

label_enum!(
    /// Every labelling task an annotator or judge can perform.
    LabelTask {
        StepType => "Step Type",
        DescCorrectness => "Description Correctness",
        DescRelevance => "Description Relevance",
        DescErrorType => "Description Error Types",
        LogicCorrectness => "Logic Correctness",
        LogicRelevance => "Logic Relevance",
        Informativeness => "Informativeness",
        LogicErrorType => "Logic Error Types",
        McotCorrectness => "MCoT Correctness",
        PredictionCorrectness => "Prediction Correctness",
    }
);

impl LabelTask {
    /// The nine fine-grained tasks of the pairwise comparison protocol, in
    /// report column order.
    pub const PAIRWISE: [LabelTask; 9] = [
        LabelTask::StepType,
        LabelTask::DescRelevance,
        LabelTask::DescCorrectness,
        LabelTask::DescErrorType,
        LabelTask::LogicRelevance,
        LabelTask::LogicCorrectness,
        LabelTask::Informativeness,
        LabelTask::LogicErrorType,
        LabelTask::McotCorrectness,
    ];

    /// Canonical label keys of the task's closed domain.
    pub fn domain(self) -> &'static [&'static str] {
        match self {
            LabelTask::StepType => StepType::KEYS,
            LabelTask::DescCorrectness => DescCorrectness::KEYS,
            LabelTask::DescRelevance => DescRelevance::KEYS,
            LabelTask::DescErrorType => DescErrorType::KEYS,
            LabelTask::LogicCorrectness
            | LabelTask::McotCorrectness
            | LabelTask::PredictionCorrectness => Correctness::KEYS,
            LabelTask::LogicRelevance => LogicRelevance::KEYS,
            LabelTask::Informativeness => Informativeness::KEYS,
            LabelTask::LogicErrorType => LogicErrorType::KEYS,
        }
    }

    pub fn contains(self, label: &str) -> bool {
        self.domain().contains(&label)
    }

    /// Prompt wording for a label key of this task.
    pub fn label_display(self, key: &str) -> Option<&'static str> {
        match self {
            LabelTask::StepType => StepType::from_key(key).map(StepType::display),
            LabelTask::DescCorrectness => DescCorrectness::from_key(key).map(DescCorrectness::display),
            LabelTask::DescRelevance => DescRelevance::from_key(key).map(DescRelevance::display),
            LabelTask::DescErrorType => DescErrorType::from_key(key).map(DescErrorType::display),
            LabelTask::LogicCorrectness
            | LabelTask::McotCorrectness
            | LabelTask::PredictionCorrectness => Correctness::from_key(key).map(Correctness::display),
            LabelTask::LogicRelevance => LogicRelevance::from_key(key).map(LogicRelevance::display),
            LabelTask::Informativeness => Informativeness::from_key(key).map(Informativeness::display),
            LabelTask::LogicErrorType => LogicErrorType::from_key(key).map(LogicErrorType::display),
        }
    }

    /// Chain-level tasks are annotated once per record, at step index 0.
    pub fn is_chain_level(self) -> bool {
        matches!(self, LabelTask::McotCorrectness | LabelTask::PredictionCorrectness)
    }

    pub fn is_error_type(self) -> bool {
        matches!(self, LabelTask::DescErrorType | LabelTask::LogicErrorType)
    }

    pub fn is_description(self) -> bool {
        matches!(
            self,
            LabelTask::DescCorrectness | LabelTask::DescRelevance | LabelTask::DescErrorType
        )
    }

    pub fn is_logic(self) -> bool {
        matches!(
            self,
            LabelTask::LogicCorrectness
                | LabelTask::LogicRelevance
                | LabelTask::Informativeness
                | LabelTask::LogicErrorType
        )
    }

    /// Whether a step of the given type is labelled on this task at all.
    pub fn applies_to(self, step_type: StepType) -> bool {
        match step_type {
            StepType::Description => self.is_description(),
            StepType::Reasoning => self.is_logic(),
            StepType::Both => self.is_description() || self.is_logic(),
        }
    }
}

impl FromStr for LabelTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LabelTask::from_key(s).ok_or_else(|| format!("unknown label task {s:?}"))
    }
}

/// The always-required (non-error-type) tasks for a step of the given type.
pub fn required_tasks(step_type: StepType) -> &'static [LabelTask] {
    const DESC: &[LabelTask] = &[LabelTask::DescCorrectness, LabelTask::DescRelevance];
    const LOGIC: &[LabelTask] = &[
        LabelTask::LogicCorrectness,
        LabelTask::LogicRelevance,
        LabelTask::Informativeness,
    ];
    const BOTH: &[LabelTask] = &[
        LabelTask::DescCorrectness,
        LabelTask::DescRelevance,
        LabelTask::LogicCorrectness,
        LabelTask::LogicRelevance,
        LabelTask::Informativeness,
    ];
    match step_type {
        StepType::Description => DESC,
        StepType::Reasoning => LOGIC,
        StepType::Both => BOTH,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Hard,
    Normal,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Hard, Split::Normal];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Hard => "Hard",
            Split::Normal => "Normal",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hard" => Ok(Split::Hard),
            "normal" => Ok(Split::Normal),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

/// How description relevance feeds the good-step rule.
///
/// `Lenient` accepts any relevance label except `None`; `Strict` requires
/// the step to be relevant to both the image and the question.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelevanceMode {
    Strict,
    #[default]
    Lenient,
}

impl RelevanceMode {
    pub fn passes(self, relevance: DescRelevance) -> bool {
        match self {
            RelevanceMode::Strict => relevance == DescRelevance::Both,
            RelevanceMode::Lenient => relevance != DescRelevance::None,
        }
    }
}

impl fmt::Display for RelevanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelevanceMode::Strict => "strict",
            RelevanceMode::Lenient => "lenient",
        })
    }
}

impl FromStr for RelevanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(RelevanceMode::Strict),
            "lenient" => Ok(RelevanceMode::Lenient),
            _ => Err(format!("unknown relevance mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub text: String,
}

/// One rater's label for one task on one step (step index 0 for chain-level tasks).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepAnnotation {
    pub annotator_id: String,
    pub step_index: usize,
    pub task: LabelTask,
    pub label: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepValidity {
    #[default]
    Valid,
    InvalidTie,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainValidity {
    #[default]
    Valid,
    Invalid,
}

/// Aggregated gold labels of one step.
///
/// Only the labels applicable to the step type are present; error types only
/// accompany a failing correctness label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStepLabel {
    pub step_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_type: Option<StepType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desc_correctness: Option<DescCorrectness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desc_relevance: Option<DescRelevance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desc_error_type: Option<DescErrorType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logic_correctness: Option<Correctness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logic_relevance: Option<LogicRelevance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informativeness: Option<Informativeness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logic_error_type: Option<LogicErrorType>,
    #[serde(default)]
    pub validity: StepValidity,
}

impl GoldStepLabel {
    pub fn new(step_index: usize, step_type: StepType) -> Self {
        Self {
            step_index,
            step_type: Some(step_type),
            ..Self::default()
        }
    }

    /// Gold label key for a step-level task, if present.
    pub fn label(&self, task: LabelTask) -> Option<&'static str> {
        match task {
            LabelTask::StepType => self.step_type.map(StepType::key),
            LabelTask::DescCorrectness => self.desc_correctness.map(DescCorrectness::key),
            LabelTask::DescRelevance => self.desc_relevance.map(DescRelevance::key),
            LabelTask::DescErrorType => self.desc_error_type.map(DescErrorType::key),
            LabelTask::LogicCorrectness => self.logic_correctness.map(Correctness::key),
            LabelTask::LogicRelevance => self.logic_relevance.map(LogicRelevance::key),
            LabelTask::Informativeness => self.informativeness.map(Informativeness::key),
            LabelTask::LogicErrorType => self.logic_error_type.map(LogicErrorType::key),
            LabelTask::McotCorrectness | LabelTask::PredictionCorrectness => None,
        }
    }

    /// Store a label given by key. Returns an error when the key is outside
    /// the task domain or the task is chain-level.
    pub fn set_label(&mut self, task: LabelTask, key: &str) -> Result<(), ModelError> {
        let outside = || ModelError::LabelOutsideDomain {
            task,
            label: key.to_string(),
        };
        match task {
            LabelTask::StepType => self.step_type = Some(StepType::from_key(key).ok_or_else(outside)?),
            LabelTask::DescCorrectness => {
                self.desc_correctness = Some(DescCorrectness::from_key(key).ok_or_else(outside)?)
            }
            LabelTask::DescRelevance => {
                self.desc_relevance = Some(DescRelevance::from_key(key).ok_or_else(outside)?)
            }
            LabelTask::DescErrorType => {
                self.desc_error_type = Some(DescErrorType::from_key(key).ok_or_else(outside)?)
            }
            LabelTask::LogicCorrectness => {
                self.logic_correctness = Some(Correctness::from_key(key).ok_or_else(outside)?)
            }
            LabelTask::LogicRelevance => {
                self.logic_relevance = Some(LogicRelevance::from_key(key).ok_or_else(outside)?)
            }
            LabelTask::Informativeness => {
                self.informativeness = Some(Informativeness::from_key(key).ok_or_else(outside)?)
            }
            LabelTask::LogicErrorType => {
                self.logic_error_type = Some(LogicErrorType::from_key(key).ok_or_else(outside)?)
            }
            LabelTask::McotCorrectness | LabelTask::PredictionCorrectness => {
                return Err(ModelError::StepTaskAtChainLevel { task })
            }
        }
        Ok(())
    }

    /// Checks the type-conditional presence rules.
    pub fn validate(&self) -> Result<(), ModelError> {
        let step_index = self.step_index;
        let Some(step_type) = self.step_type else {
            return match self.validity {
                StepValidity::Valid => Err(ModelError::MissingLabel {
                    step_index,
                    task: LabelTask::StepType,
                }),
                StepValidity::InvalidTie => Ok(()),
            };
        };
        for task in LabelTask::ALL.iter().copied().filter(|t| !t.is_chain_level()) {
            if task == LabelTask::StepType {
                continue;
            }
            let present = self.label(task).is_some();
            if present && !task.applies_to(step_type) {
                return Err(ModelError::UnexpectedLabel { step_index, task });
            }
            if !present
                && self.validity == StepValidity::Valid
                && task.applies_to(step_type)
                && !task.is_error_type()
            {
                return Err(ModelError::MissingLabel { step_index, task });
            }
        }
        if self.desc_error_type.is_some() && self.desc_correctness == Some(DescCorrectness::FullyCorrect) {
            return Err(ModelError::UnexpectedLabel {
                step_index,
                task: LabelTask::DescErrorType,
            });
        }
        if self.logic_error_type.is_some() && self.logic_correctness == Some(Correctness::Correct) {
            return Err(ModelError::UnexpectedLabel {
                step_index,
                task: LabelTask::LogicErrorType,
            });
        }
        Ok(())
    }
}

/// Aggregated gold labels of a whole chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldChain {
    pub steps: Vec<GoldStepLabel>,
    pub mcot_correct: bool,
    #[serde(default)]
    pub validity: ChainValidity,
    /// Relevance reading used when `mcot_correct` was derived.
    #[serde(default)]
    pub relevance_mode: RelevanceMode,
}

impl GoldChain {
    pub fn is_valid(&self) -> bool {
        self.validity == ChainValidity::Valid
    }

    pub fn step(&self, step_index: usize) -> Option<&GoldStepLabel> {
        self.steps.iter().find(|s| s.step_index == step_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McotRecord {
    pub id: String,
    pub split: Split,
    #[serde(default)]
    pub source_dataset: String,
    /// Groups alternative answers to the same question; falls back to the
    /// question text when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    pub image_ref: String,
    pub question: String,
    pub steps: Vec<Step>,
    #[serde(default)]
    pub generator: String,
    pub annotations: Vec<StepAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<GoldChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction_correct: Option<bool>,
}

impl McotRecord {
    pub fn question_key(&self) -> &str {
        self.question_id.as_deref().unwrap_or(&self.question)
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    pub fn step_text(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(1)
            .and_then(|i| self.steps.get(i))
            .map(|s| s.text.as_str())
    }

    pub fn valid_gold(&self) -> Option<&GoldChain> {
        self.gold.as_ref().filter(|g| g.is_valid())
    }

    /// Enforces every record-level invariant.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.steps.is_empty() {
            return Err(ModelError::EmptyChain);
        }
        for (i, step) in self.steps.iter().enumerate() {
            if step.index != i + 1 {
                return Err(ModelError::NonContiguousSteps {
                    expected: i + 1,
                    found: step.index,
                });
            }
        }
        let n = self.steps.len();
        let mut seen = HashSet::new();
        for a in &self.annotations {
            if a.task.is_chain_level() {
                if a.step_index != 0 {
                    return Err(ModelError::ChainTaskAtStepLevel {
                        task: a.task,
                        step_index: a.step_index,
                    });
                }
            } else if a.step_index == 0 {
                return Err(ModelError::StepTaskAtChainLevel { task: a.task });
            } else if a.step_index > n {
                return Err(ModelError::UnknownStep {
                    task: a.task,
                    step_index: a.step_index,
                });
            }
            if !a.task.contains(&a.label) {
                return Err(ModelError::LabelOutsideDomain {
                    task: a.task,
                    label: a.label.clone(),
                });
            }
            if !seen.insert((a.annotator_id.as_str(), a.step_index, a.task)) {
                return Err(ModelError::DuplicateAnnotation {
                    annotator: a.annotator_id.clone(),
                    step_index: a.step_index,
                    task: a.task,
                });
            }
        }
        if let Some(gold) = &self.gold {
            if gold.steps.len() != n {
                return Err(ModelError::GoldLengthMismatch {
                    expected: n,
                    found: gold.steps.len(),
                });
            }
            for (i, step) in gold.steps.iter().enumerate() {
                if step.step_index != i + 1 {
                    return Err(ModelError::NonContiguousSteps {
                        expected: i + 1,
                        found: step.step_index,
                    });
                }
                step.validate()?;
            }
            if gold.is_valid() {
                let derived = derive_mcot_correct(&gold.steps, gold.relevance_mode)?;
                if derived != gold.mcot_correct {
                    return Err(ModelError::InconsistentChainVerdict {
                        stored: gold.mcot_correct,
                        derived,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Per-dimension step scores on `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentScores {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_d_correct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_d_relevant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_l_correct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_l_relevant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_info: Option<f64>,
}

impl ComponentScores {
    pub fn description(correct: f64, relevant: f64) -> Self {
        Self {
            s_d_correct: Some(correct),
            s_d_relevant: Some(relevant),
            ..Self::default()
        }
    }

    pub fn reasoning(correct: f64, relevant: f64, info: f64) -> Self {
        Self {
            s_l_correct: Some(correct),
            s_l_relevant: Some(relevant),
            s_info: Some(info),
            ..Self::default()
        }
    }

    pub fn all(d_correct: f64, d_relevant: f64, l_correct: f64, l_relevant: f64, info: f64) -> Self {
        Self {
            s_d_correct: Some(d_correct),
            s_d_relevant: Some(d_relevant),
            s_l_correct: Some(l_correct),
            s_l_relevant: Some(l_relevant),
            s_info: Some(info),
        }
    }

    pub fn get(&self, dim: ScoreDimension) -> Option<f64> {
        match dim {
            ScoreDimension::DescCorrect => self.s_d_correct,
            ScoreDimension::DescRelevant => self.s_d_relevant,
            ScoreDimension::LogicCorrect => self.s_l_correct,
            ScoreDimension::LogicRelevant => self.s_l_relevant,
            ScoreDimension::Info => self.s_info,
        }
    }

    pub fn set(&mut self, dim: ScoreDimension, value: f64) {
        let slot = match dim {
            ScoreDimension::DescCorrect => &mut self.s_d_correct,
            ScoreDimension::DescRelevant => &mut self.s_d_relevant,
            ScoreDimension::LogicCorrect => &mut self.s_l_correct,
            ScoreDimension::LogicRelevant => &mut self.s_l_relevant,
            ScoreDimension::Info => &mut self.s_info,
        };
        *slot = Some(value);
    }

    /// Multiplies every present component by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let f = |v: Option<f64>| v.map(|x| x * factor);
        Self {
            s_d_correct: f(self.s_d_correct),
            s_d_relevant: f(self.s_d_relevant),
            s_l_correct: f(self.s_l_correct),
            s_l_relevant: f(self.s_l_relevant),
            s_info: f(self.s_info),
        }
    }
}

/// The five per-step scoring dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScoreDimension {
    DescCorrect,
    DescRelevant,
    LogicCorrect,
    LogicRelevant,
    Info,
}

impl ScoreDimension {
    pub const ALL: [ScoreDimension; 5] = [
        ScoreDimension::DescCorrect,
        ScoreDimension::DescRelevant,
        ScoreDimension::LogicCorrect,
        ScoreDimension::LogicRelevant,
        ScoreDimension::Info,
    ];

    /// Dimensions scored for a step of the given type.
    pub fn for_type(step_type: StepType) -> &'static [ScoreDimension] {
        match step_type {
            StepType::Description => &Self::ALL[..2],
            StepType::Reasoning => &Self::ALL[2..],
            StepType::Both => &Self::ALL,
        }
    }

    /// The label task whose gold label is the human reference for this dimension.
    pub fn reference_task(self) -> LabelTask {
        match self {
            ScoreDimension::DescCorrect => LabelTask::DescCorrectness,
            ScoreDimension::DescRelevant => LabelTask::DescRelevance,
            ScoreDimension::LogicCorrect => LabelTask::LogicCorrectness,
            ScoreDimension::LogicRelevant => LabelTask::LogicRelevance,
            ScoreDimension::Info => LabelTask::Informativeness,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            ScoreDimension::DescCorrect => "d_correct",
            ScoreDimension::DescRelevant => "d_relevant",
            ScoreDimension::LogicCorrect => "l_correct",
            ScoreDimension::LogicRelevant => "l_relevant",
            ScoreDimension::Info => "info",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.key() == key)
    }

    /// Heading used when several dimensions are requested in one response.
    pub fn display(self) -> &'static str {
        match self {
            ScoreDimension::DescCorrect => "Description Correctness",
            ScoreDimension::DescRelevant => "Description Relevance",
            ScoreDimension::LogicCorrect => "Logic Correctness",
            ScoreDimension::LogicRelevant => "Logic Relevance",
            ScoreDimension::Info => "Informativeness",
        }
    }
}

/// Whether a valid gold step counts as a good step.
///
/// Description steps must be fully correct and pass the relevance reading;
/// reasoning steps must be correct, relevant and informative; `Both` steps
/// must satisfy both condition sets.
pub fn derive_step_good(gold: &GoldStepLabel, mode: RelevanceMode) -> Result<bool, ModelError> {
    let step_index = gold.step_index;
    if gold.validity != StepValidity::Valid {
        return Err(ModelError::InvalidStep { step_index });
    }
    let missing = |task| ModelError::MissingLabel { step_index, task };
    let step_type = gold.step_type.ok_or_else(|| missing(LabelTask::StepType))?;

    let description_good = || -> Result<bool, ModelError> {
        let correctness = gold
            .desc_correctness
            .ok_or_else(|| missing(LabelTask::DescCorrectness))?;
        let relevance = gold
            .desc_relevance
            .ok_or_else(|| missing(LabelTask::DescRelevance))?;
        Ok(correctness == DescCorrectness::FullyCorrect && mode.passes(relevance))
    };
    let reasoning_good = || -> Result<bool, ModelError> {
        let correctness = gold
            .logic_correctness
            .ok_or_else(|| missing(LabelTask::LogicCorrectness))?;
        let relevance = gold
            .logic_relevance
            .ok_or_else(|| missing(LabelTask::LogicRelevance))?;
        let info = gold
            .informativeness
            .ok_or_else(|| missing(LabelTask::Informativeness))?;
        Ok(correctness == Correctness::Correct
            && relevance == LogicRelevance::Relevant
            && info == Informativeness::Informative)
    };

    match step_type {
        StepType::Description => description_good(),
        StepType::Reasoning => reasoning_good(),
        StepType::Both => {
            let d = description_good()?;
            let r = reasoning_good()?;
            Ok(d && r)
        }
    }
}

/// Conjunction of [`derive_step_good`] over the chain. Every step is checked,
/// so a schema error anywhere surfaces even after a failing step.
pub fn derive_mcot_correct(steps: &[GoldStepLabel], mode: RelevanceMode) -> Result<bool, ModelError> {
    if steps.is_empty() {
        return Err(ModelError::EmptyChain);
    }
    let mut all_good = true;
    for step in steps {
        all_good &= derive_step_good(step, mode)?;
    }
    Ok(all_good)
}

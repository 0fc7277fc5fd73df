//! Geometric-mean correctness scores for steps and chains.
//!
//! A description step scores `Correctness_D = gm(S_d_correct, S_d_relevant)`,
//! a reasoning step `Correctness_R = gm(S_l_correct, S_l_relevant, S_info)`.
//! Chains aggregate per-step values by another geometric mean, either picking
//! the formula by step type ([`chain_correctness_type`]) or combining both
//! formulas on every step ([`chain_correctness_all`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ComponentScores, Correctness, DescCorrectness, DescRelevance, Informativeness, LabelTask,
    LogicRelevance, RelevanceMode, StepType,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("geometric mean of an empty list")]
    Empty,
    #[error("score {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("step {step_index} is missing component {component}")]
    MissingComponent {
        step_index: usize,
        component: &'static str,
    },
    #[error("0-10 score {0} is out of range")]
    ScoreOutOfRange(i64),
    #[error("{task} has no human reference mapping")]
    NoReferenceMapping { task: LabelTask },
    #[error("label {label:?} is outside the {task} domain")]
    UnknownLabel { task: LabelTask, label: String },
}

/// `(x_1 * ... * x_n)^(1/n)`, computed in log space; exactly 0 when any input is 0.
pub fn geo_mean(xs: &[f64]) -> Result<f64, MetricsError> {
    if xs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut log_sum = 0.0;
    let mut has_zero = false;
    for &x in xs {
        if !(0.0..=1.0).contains(&x) {
            return Err(MetricsError::OutOfRange(x));
        }
        if x == 0.0 {
            has_zero = true;
        } else {
            log_sum += x.ln();
        }
    }
    if has_zero {
        return Ok(0.0);
    }
    Ok((log_sum / xs.len() as f64).exp().clamp(0.0, 1.0))
}

fn component(value: Option<f64>, step_index: usize, name: &'static str) -> Result<f64, MetricsError> {
    value.ok_or(MetricsError::MissingComponent {
        step_index,
        component: name,
    })
}

fn description_at(s: &ComponentScores, step_index: usize) -> Result<f64, MetricsError> {
    geo_mean(&[
        component(s.s_d_correct, step_index, "s_d_correct")?,
        component(s.s_d_relevant, step_index, "s_d_relevant")?,
    ])
}

fn reasoning_at(s: &ComponentScores, step_index: usize) -> Result<f64, MetricsError> {
    geo_mean(&[
        component(s.s_l_correct, step_index, "s_l_correct")?,
        component(s.s_l_relevant, step_index, "s_l_relevant")?,
        component(s.s_info, step_index, "s_info")?,
    ])
}

pub fn step_correctness_description(s: &ComponentScores) -> Result<f64, MetricsError> {
    description_at(s, 0)
}

pub fn step_correctness_reasoning(s: &ComponentScores) -> Result<f64, MetricsError> {
    reasoning_at(s, 0)
}

/// Per-step value for a typed step. `Both` steps take the geometric mean of
/// the description and reasoning formulas.
pub fn step_correctness_typed(step_type: StepType, s: &ComponentScores) -> Result<f64, MetricsError> {
    typed_at(step_type, s, 0)
}

fn typed_at(step_type: StepType, s: &ComponentScores, step_index: usize) -> Result<f64, MetricsError> {
    match step_type {
        StepType::Description => description_at(s, step_index),
        StepType::Reasoning => reasoning_at(s, step_index),
        StepType::Both => geo_mean(&[description_at(s, step_index)?, reasoning_at(s, step_index)?]),
    }
}

/// Per-step value ignoring type: `gm(Correctness_D, Correctness_R)`.
pub fn step_correctness_all(s: &ComponentScores) -> Result<f64, MetricsError> {
    all_at(s, 0)
}

fn all_at(s: &ComponentScores, step_index: usize) -> Result<f64, MetricsError> {
    geo_mean(&[description_at(s, step_index)?, reasoning_at(s, step_index)?])
}

/// Chain scoring methods compared in the scoring evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScoringMethod {
    /// One 0-10 score for the whole chain.
    Holistic,
    /// One 0-10 score per step, aggregated by geometric mean.
    StepwisePlain,
    /// Per-dimension scores combined by step type.
    MiCEvalType,
    /// All five dimensions on every step.
    MiCEvalAll,
}

impl ScoringMethod {
    pub const ALL: [ScoringMethod; 4] = [
        ScoringMethod::Holistic,
        ScoringMethod::StepwisePlain,
        ScoringMethod::MiCEvalType,
        ScoringMethod::MiCEvalAll,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            ScoringMethod::Holistic => "holistic",
            ScoringMethod::StepwisePlain => "stepwise",
            ScoringMethod::MiCEvalType => "miceval-type",
            ScoringMethod::MiCEvalAll => "miceval-all",
        }
    }
}

impl fmt::Display for ScoringMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for ScoringMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.cli_name() == s)
            .ok_or_else(|| format!("unknown scoring method {s:?}"))
    }
}

/// Score of one step with the inputs it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScore {
    pub step_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_type: Option<StepType>,
    pub value: f64,
    pub components: ComponentScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainScore {
    pub method: ScoringMethod,
    pub value: f64,
    pub steps: Vec<StepScore>,
}

/// Type-conditioned chain correctness. Steps are numbered from 1 in the trace.
pub fn chain_correctness_type(steps: &[(StepType, ComponentScores)]) -> Result<ChainScore, MetricsError> {
    if steps.is_empty() {
        return Err(MetricsError::Empty);
    }
    let scored = steps
        .iter()
        .enumerate()
        .map(|(i, (step_type, components))| {
            Ok(StepScore {
                step_index: i + 1,
                step_type: Some(*step_type),
                value: typed_at(*step_type, components, i + 1)?,
                components: *components,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    chain_from_steps(ScoringMethod::MiCEvalType, scored)
}

/// Type-free chain correctness over all five components of every step.
pub fn chain_correctness_all(steps: &[ComponentScores]) -> Result<ChainScore, MetricsError> {
    if steps.is_empty() {
        return Err(MetricsError::Empty);
    }
    let scored = steps
        .iter()
        .enumerate()
        .map(|(i, components)| {
            Ok(StepScore {
                step_index: i + 1,
                step_type: None,
                value: all_at(components, i + 1)?,
                components: *components,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    chain_from_steps(ScoringMethod::MiCEvalAll, scored)
}

/// Geometric mean over already-computed step values.
pub fn chain_from_steps(method: ScoringMethod, steps: Vec<StepScore>) -> Result<ChainScore, MetricsError> {
    let values: Vec<f64> = steps.iter().map(|s| s.value).collect();
    let value = geo_mean(&values)?;
    Ok(ChainScore { method, value, steps })
}

pub fn normalize_score10(x: i64) -> Result<f64, MetricsError> {
    if !(0..=10).contains(&x) {
        return Err(MetricsError::ScoreOutOfRange(x));
    }
    Ok(x as f64 / 10.0)
}

/// Maps a gold label to its human reference score in `{0, 0.5, 1}`.
///
/// Only `PartiallyCorrect` (description correctness) maps to 0.5. Description
/// relevance follows the configured relevance reading.
pub fn human_reference_score(task: LabelTask, label: &str, mode: RelevanceMode) -> Result<f64, MetricsError> {
    let unknown = || MetricsError::UnknownLabel {
        task,
        label: label.to_string(),
    };
    let score = match task {
        LabelTask::DescCorrectness => match DescCorrectness::from_key(label).ok_or_else(unknown)? {
            DescCorrectness::FullyCorrect => 1.0,
            DescCorrectness::PartiallyCorrect => 0.5,
            DescCorrectness::Unsupported => 0.0,
        },
        LabelTask::DescRelevance => {
            let relevance = DescRelevance::from_key(label).ok_or_else(unknown)?;
            if mode.passes(relevance) {
                1.0
            } else {
                0.0
            }
        }
        LabelTask::LogicCorrectness | LabelTask::McotCorrectness | LabelTask::PredictionCorrectness => {
            match Correctness::from_key(label).ok_or_else(unknown)? {
                Correctness::Correct => 1.0,
                Correctness::Incorrect => 0.0,
            }
        }
        LabelTask::LogicRelevance => match LogicRelevance::from_key(label).ok_or_else(unknown)? {
            LogicRelevance::Relevant => 1.0,
            LogicRelevance::Irrelevant => 0.0,
        },
        LabelTask::Informativeness => match Informativeness::from_key(label).ok_or_else(unknown)? {
            Informativeness::Informative => 1.0,
            Informativeness::Uninformative => 0.0,
        },
        LabelTask::StepType | LabelTask::DescErrorType | LabelTask::LogicErrorType => {
            return Err(MetricsError::NoReferenceMapping { task })
        }
    };
    Ok(score)
}

/// Input to [`verification_bit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerificationInput<'a> {
    Label { task: LabelTask, label: &'a str },
    Score(f64),
}

/// Binary verifier decision: 1 when the score reaches `threshold` (ties round up).
pub fn verification_bit(
    input: VerificationInput<'_>,
    threshold: f64,
    mode: RelevanceMode,
) -> Result<u8, MetricsError> {
    let score = match input {
        VerificationInput::Label { task, label } => human_reference_score(task, label, mode)?,
        VerificationInput::Score(s) => s,
    };
    Ok(u8::from(score >= threshold))
}

pub const DEFAULT_VERIFICATION_THRESHOLD: f64 = 0.5;

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-6;

    #[test]
    fn geo_mean_examples() {
        assert_eq!(geo_mean(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(geo_mean(&[0.0, 0.9]).unwrap(), 0.0);
        // sqrt(0.4) = 0.632455532...
        assert!((geo_mean(&[0.5, 0.8]).unwrap() - 0.632_456).abs() < TOL);
    }

    #[test]
    fn geo_mean_errors() {
        assert_eq!(geo_mean(&[]), Err(MetricsError::Empty));
        assert_eq!(geo_mean(&[0.5, 1.2]), Err(MetricsError::OutOfRange(1.2)));
        assert!(matches!(geo_mean(&[f64::NAN]), Err(MetricsError::OutOfRange(_))));
    }

    #[test]
    fn description_examples() {
        let d = |a, b| step_correctness_description(&ComponentScores::description(a, b)).unwrap();
        assert_eq!(d(1.0, 1.0), 1.0);
        assert!((d(0.5, 1.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(d(0.9, 0.0), 0.0);
    }

    #[test]
    fn reasoning_examples() {
        let r = |a, b, c| step_correctness_reasoning(&ComponentScores::reasoning(a, b, c)).unwrap();
        assert!((r(0.9, 0.9, 0.9) - 0.9).abs() < 1e-12);
        assert_eq!(r(1.0, 1.0, 0.0), 0.0);
        assert!((r(0.8, 0.9, 1.0) - 0.896_281).abs() < TOL);
    }

    #[test]
    fn missing_component_is_reported() {
        let err = step_correctness_reasoning(&ComponentScores::description(1.0, 1.0)).unwrap_err();
        assert!(matches!(err, MetricsError::MissingComponent { component: "s_l_correct", .. }));
    }

    #[test]
    fn chain_type_examples() {
        let chain = chain_correctness_type(&[
            (StepType::Description, ComponentScores::description(1.0, 1.0)),
            (StepType::Reasoning, ComponentScores::reasoning(0.64, 0.64, 0.64)),
        ])
        .unwrap();
        assert!((chain.value - 0.8).abs() < TOL);
        assert_eq!(chain.steps.len(), 2);

        let single = chain_correctness_type(&[(StepType::Description, ComponentScores::description(1.0, 1.0))]).unwrap();
        assert_eq!(single.value, 1.0);
    }

    #[test]
    fn chain_type_rejects_mismatched_components() {
        let err = chain_correctness_type(&[
            (StepType::Description, ComponentScores::description(1.0, 1.0)),
            (StepType::Reasoning, ComponentScores::description(1.0, 1.0)),
        ])
        .unwrap_err();
        assert_eq!(
            err,
            MetricsError::MissingComponent {
                step_index: 2,
                component: "s_l_correct"
            }
        );
        assert_eq!(chain_correctness_type(&[]).unwrap_err(), MetricsError::Empty);
    }

    #[test]
    fn chain_all_examples() {
        let one = chain_correctness_all(&[ComponentScores::all(1.0, 1.0, 1.0, 1.0, 1.0)]).unwrap();
        assert_eq!(one.value, 1.0);
        let zero = chain_correctness_all(&[ComponentScores::all(1.0, 1.0, 1.0, 1.0, 0.0)]).unwrap();
        assert_eq!(zero.value, 0.0);
        // Nested form: step = sqrt(sqrt(ab) * cbrt(cde)); chain = sqrt(step1 * step2).
        let s1 = ComponentScores::all(0.9, 0.8, 0.7, 1.0, 0.6);
        let s2 = ComponentScores::all(0.5, 1.0, 1.0, 0.4, 0.9);
        let step = |a: f64, b: f64, c: f64, d: f64, e: f64| ((a * b).sqrt() * (c * d * e).cbrt()).sqrt();
        let oracle = (step(0.9, 0.8, 0.7, 1.0, 0.6) * step(0.5, 1.0, 1.0, 0.4, 0.9)).sqrt();
        let chain = chain_correctness_all(&[s1, s2]).unwrap();
        assert!((chain.value - oracle).abs() < TOL);
    }

    #[test]
    fn normalize_score10_examples() {
        assert_eq!(normalize_score10(10).unwrap(), 1.0);
        assert_eq!(normalize_score10(0).unwrap(), 0.0);
        assert_eq!(normalize_score10(7).unwrap(), 0.7);
        assert_eq!(normalize_score10(11), Err(MetricsError::ScoreOutOfRange(11)));
        assert_eq!(normalize_score10(-1), Err(MetricsError::ScoreOutOfRange(-1)));
    }

    #[test]
    fn human_reference_examples() {
        let m = RelevanceMode::Lenient;
        assert_eq!(human_reference_score(LabelTask::DescCorrectness, "PartiallyCorrect", m).unwrap(), 0.5);
        assert_eq!(human_reference_score(LabelTask::LogicCorrectness, "Incorrect", m).unwrap(), 0.0);
        assert_eq!(human_reference_score(LabelTask::Informativeness, "Informative", m).unwrap(), 1.0);
        assert_eq!(human_reference_score(LabelTask::DescRelevance, "ImageRelevant", m).unwrap(), 1.0);
        assert_eq!(
            human_reference_score(LabelTask::DescRelevance, "ImageRelevant", RelevanceMode::Strict).unwrap(),
            0.0
        );
        assert!(matches!(
            human_reference_score(LabelTask::DescErrorType, "EntityFalse", m),
            Err(MetricsError::NoReferenceMapping { .. })
        ));
        assert!(matches!(
            human_reference_score(LabelTask::LogicCorrectness, "Maybe", m),
            Err(MetricsError::UnknownLabel { .. })
        ));
    }

    #[test]
    fn verification_bit_examples() {
        let m = RelevanceMode::Lenient;
        let t = DEFAULT_VERIFICATION_THRESHOLD;
        let label = VerificationInput::Label {
            task: LabelTask::LogicCorrectness,
            label: "Correct",
        };
        assert_eq!(verification_bit(label, t, m).unwrap(), 1);
        assert_eq!(verification_bit(VerificationInput::Score(0.49), t, m).unwrap(), 0);
        assert_eq!(verification_bit(VerificationInput::Score(0.5), t, m).unwrap(), 1);
    }

    #[test]
    fn method_names_parse() {
        for m in ScoringMethod::ALL {
            assert_eq!(m.cli_name().parse::<ScoringMethod>().unwrap(), m);
        }
    }
}

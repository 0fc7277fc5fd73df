//! Evaluation engine for multimodal chain-of-thought (MCoT) answers.
//!
//! The crate is organised around the life cycle of an evaluation run:
//!
//! * [`model`] holds the domain vocabulary: records, steps, label taxonomies
//!   and the rules that turn gold step labels into a chain verdict.
//! * [`dataset`] loads and validates line-delimited datasets, summarises splits
//!   and exports choice-ranking groups.
//! * [`annotation`] aggregates multi-annotator votes into gold data, applies the
//!   validity filter and computes Bennett-Alpert-Goldstein S agreement.
//! * [`judge`] builds prompts, samples few-shot demonstrations, talks to judge
//!   backends and parses their raw text into verdicts.
//! * [`metrics`] implements the geometric-mean step and chain correctness scores.
//! * [`stats`] provides accuracy, per-label F1, Somers' D and Spearman's rho.
//! * [`experiments`] wires everything into the pairwise, scoring and
//!   choice-ranking protocols and emits reports.

pub mod annotation;
pub mod dataset;
pub mod experiments;
pub mod judge;
pub mod metrics;
pub mod model;
pub mod stats;

pub use model::{
    ComponentScores, GoldChain, GoldStepLabel, LabelTask, McotRecord, RelevanceMode, Split, Step,
    StepAnnotation, StepType,
};

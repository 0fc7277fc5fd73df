//! Raw judge text to verdicts.
//!
//! Labels are matched case-insensitively as whole token sequences, where a
//! token is a run of ASCII letters or digits. A match nested inside a longer
//! match is discarded, so "Non-spatial Relationship False" does not also count
//! as "Spatial Relationship False". Exactly one distinct label must remain.

use std::collections::{BTreeMap, BTreeSet};

use super::{ExpectedOutput, Outcome};
use crate::model::{Correctness, LabelTask, ScoreDimension};

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

fn phrases(task: LabelTask) -> Vec<(Vec<String>, &'static str)> {
    let mut out = Vec::new();
    for &key in task.domain() {
        out.push((tokens(key), key));
        if let Some(display) = task.label_display(key) {
            out.push((tokens(display), key));
        }
    }
    if task == LabelTask::McotCorrectness {
        out.push((vec!["yes".into()], Correctness::Correct.key()));
        out.push((vec!["no".into()], Correctness::Incorrect.key()));
    }
    out
}

/// Returns the label key when the text names exactly one label of `task`.
pub fn parse_label(raw: &str, task: LabelTask) -> Option<String> {
    let toks = tokens(raw);
    let mut spans: Vec<(usize, usize, &'static str)> = Vec::new();
    for (phrase, key) in phrases(task) {
        if phrase.is_empty() || phrase.len() > toks.len() {
            continue;
        }
        for start in 0..=toks.len() - phrase.len() {
            if toks[start..start + phrase.len()] == phrase[..] {
                spans.push((start, start + phrase.len(), key));
            }
        }
    }
    let labels: BTreeSet<&str> = spans
        .iter()
        .filter(|&&(s, e, _)| {
            !spans
                .iter()
                .any(|&(s2, e2, _)| s2 <= s && e <= e2 && (e2 - s2) > (e - s))
        })
        .map(|&(_, _, key)| key)
        .collect();
    match labels.len() {
        1 => labels.into_iter().next().map(str::to_string),
        _ => None,
    }
}

/// First standalone integer in the text, if it lies in 0..=10.
///
/// Numbers glued to letters (`v2`) and decimals (`7.5`) are skipped; a
/// leading minus sign makes the number out of range.
pub fn parse_score(raw: &str) -> Option<u8> {
    let bytes = raw.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let end = i;
        let mut decimal = false;
        if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
            decimal = true;
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        let glued_before = start > 0 && (bytes[start - 1].is_ascii_alphabetic() || bytes[start - 1] == b'.');
        let glued_after = i < bytes.len() && bytes[i].is_ascii_alphabetic();
        if decimal || glued_before || glued_after {
            continue;
        }
        if start > 0 && bytes[start - 1] == b'-' {
            return None;
        }
        return raw[start..end].parse::<u32>().ok().filter(|&v| v <= 10).map(|v| v as u8);
    }
    None
}

fn dimension_for(name: &str) -> Option<ScoreDimension> {
    let name = tokens(name);
    ScoreDimension::ALL
        .into_iter()
        .find(|d| tokens(d.display()) == name || tokens(d.key()) == name)
}

/// One `Name: n` line per requested dimension; duplicates or gaps are invalid.
pub fn parse_components(raw: &str, dims: &[ScoreDimension]) -> Option<BTreeMap<ScoreDimension, u8>> {
    let mut out = BTreeMap::new();
    for line in raw.lines() {
        let Some((name, value)) = line.split_once(':') else { continue };
        let Some(dim) = dimension_for(name) else { continue };
        if !dims.contains(&dim) {
            continue;
        }
        let score = parse_score(value)?;
        if out.insert(dim, score).is_some() {
            return None;
        }
    }
    (out.len() == dims.len()).then_some(out)
}

pub fn parse_verdict(raw: &str, expected: &ExpectedOutput) -> Outcome {
    let parsed = match expected {
        ExpectedOutput::Labels(task) => parse_label(raw, *task).map(Outcome::Label),
        ExpectedOutput::Score => parse_score(raw).map(Outcome::Score10),
        ExpectedOutput::Components(dims) => parse_components(raw, dims).map(Outcome::ComponentScores10),
    };
    parsed.unwrap_or(Outcome::Invalid)
}

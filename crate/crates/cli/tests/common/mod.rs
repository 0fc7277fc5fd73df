//! Shared helpers for the CLI test targets.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn chaingrade(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaingrade"))
        .current_dir(dir)
        .args(args)
        .env_remove("JUDGE_API_TOKEN")
        .output()
        .expect("spawn chaingrade")
}

/// One experiment whose structured report is pinned under `tests/golden`.
pub struct GoldenCase {
    pub name: &'static str,
    pub args: Vec<&'static str>,
}

const MCOT: [&str; 4] = ["--dataset", "mcot20.jsonl", "--judge", "scripted:judge_table.jsonl"];
const RANK: [&str; 4] = ["--dataset", "ranking.jsonl", "--judge", "scripted:ranking_table.jsonl"];

pub fn golden_cases() -> Vec<GoldenCase> {
    let mut cases = vec![
        GoldenCase {
            name: "pairwise_zero_shot",
            args: [&["pairwise"][..], &MCOT].concat(),
        },
        GoldenCase {
            name: "pairwise_few_shot",
            args: vec!["pairwise", "--config", "pairwise_fewshot.toml"],
        },
    ];
    for (name, method) in [
        ("holistic", "holistic"),
        ("stepwise", "stepwise"),
        ("miceval_type", "miceval-type"),
        ("miceval_all", "miceval-all"),
    ] {
        cases.push(GoldenCase {
            name: leak(format!("score_{name}")),
            args: [&["score", "--method", method, "--step-level"][..], &MCOT].concat(),
        });
        cases.push(GoldenCase {
            name: leak(format!("rank_{name}")),
            args: [&["rank", "--method", method][..], &RANK].concat(),
        });
    }
    cases
}

fn leak(s: String) -> &'static str {
    Box::leak(s.into_boxed_str())
}

pub fn golden_path(case: &GoldenCase) -> PathBuf {
    golden_dir().join(format!("{}.json", case.name))
}

/// Runs a case in `dir` and returns the report bytes written to stdout.
pub fn run_case(dir: &Path, case: &GoldenCase) -> Result<Vec<u8>, String> {
    let out = chaingrade(dir, &case.args);
    if !out.status.success() {
        return Err(format!(
            "{} exited with {:?}: {}",
            case.name,
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

const FIXTURE_FILES: [&str; 5] = [
    "mcot20.jsonl",
    "ranking.jsonl",
    "judge_table.jsonl",
    "ranking_table.jsonl",
    "pairwise_fewshot.toml",
];

/// Copies the experiment fixtures into `dir` with every JSONL file's lines
/// shuffled by `seed`. File names stay the same.
pub fn permuted_fixtures(dir: &Path, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for name in FIXTURE_FILES {
        let text = fs::read_to_string(fixtures().join(name)).expect("read fixture");
        let out = if name.ends_with(".jsonl") {
            let mut lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            lines.shuffle(&mut rng);
            lines.iter().map(|l| format!("{l}\n")).collect()
        } else {
            text
        };
        fs::write(dir.join(name), out).expect("write fixture copy");
    }
}

/// First differing byte offset, for failure messages.
pub fn first_difference(a: &[u8], b: &[u8]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x != y).or_else(|| (a.len() != b.len()).then(|| a.len().min(b.len())))
}

use std::path::{Path, PathBuf};

use chaingrade_core::dataset::{compute_split_stats, export_ranking_set, load_dataset, save_records, SchemaMode};
use chaingrade_core::Split;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

#[test]
fn save_then_load_is_byte_stable() {
    let data = load_dataset(fixture("mcot20.jsonl"), SchemaMode::Strict).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("copy.jsonl");
    save_records(&data.records, &copy).unwrap();
    assert_eq!(std::fs::read(&copy).unwrap(), std::fs::read(fixture("mcot20.jsonl")).unwrap());
    let again = load_dataset(&copy, SchemaMode::Strict).unwrap();
    assert_eq!(again.records, data.records);
    assert_eq!(again.provenance.sha256, data.provenance.sha256);
}

#[test]
fn repair_mode_keeps_good_lines() {
    let text = std::fs::read_to_string(fixture("mcot20.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[4] = "not json".into();
    lines[9] = lines[8].clone();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("damaged.jsonl");
    std::fs::write(&path, lines.join("\n")).unwrap();

    assert!(load_dataset(&path, SchemaMode::Strict).is_err());
    let repaired = load_dataset(&path, SchemaMode::Repair).unwrap();
    assert_eq!(repaired.records.len(), 18);
    let rejected: Vec<usize> = repaired.rejected.iter().map(|r| r.line).collect();
    assert_eq!(rejected, [5, 10]);
}

#[test]
fn ranking_fixture_groups() {
    let data = load_dataset(fixture("ranking.jsonl"), SchemaMode::Strict).unwrap();
    let set = export_ranking_set(&data.records);
    assert_eq!(set.groups.len(), 8);
    let dropped: Vec<&str> = set.dropped.iter().map(|d| d.question_key.as_str()).collect();
    assert_eq!(dropped, ["rq09", "rq10"]);
    for g in &set.groups {
        assert!(g.options.iter().any(|o| o.mcot_correct));
        assert!(g.options.iter().any(|o| !o.mcot_correct));
    }
}

#[test]
fn split_stats_cover_every_record() {
    let data = load_dataset(fixture("mcot20.jsonl"), SchemaMode::Strict).unwrap();
    let hard = compute_split_stats(&data.records, Split::Hard).unwrap();
    let normal = compute_split_stats(&data.records, Split::Normal).unwrap();
    assert_eq!(hard.mcot + normal.mcot, 20);
    assert_eq!((hard.questions, normal.questions), (4, 4));
    let steps: usize = data.records.iter().map(|r| r.steps.len()).sum();
    assert_eq!(hard.steps + normal.steps, steps);
    for s in [&hard, &normal] {
        assert_eq!(s.description_steps + s.reasoning_steps + s.both_steps, s.steps);
    }
}

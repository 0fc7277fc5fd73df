use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chaingrade_annotation_service::{router, Ack, AnnotationStore, AppState, ProgressReport, TaskResponse};
use chaingrade_core::annotation::{aggregate_record, bennett_s, vote_sets};
use chaingrade_core::{LabelTask, McotRecord, RelevanceMode, Split, Step};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn record(id: &str, steps: usize, image: &str) -> McotRecord {
    McotRecord {
        id: id.into(),
        split: Split::Normal,
        source_dataset: "fixture".into(),
        question_id: None,
        image_ref: image.into(),
        question: format!("What is shown in {id}?"),
        steps: (1..=steps)
            .map(|i| Step {
                index: i,
                text: format!("{id} step {i}"),
            })
            .collect(),
        generator: "fixture".into(),
        annotations: vec![],
        gold: None,
        prediction_correct: None,
    }
}

struct Client {
    state: Arc<AppState>,
}

impl Client {
    fn new(store: AnnotationStore) -> Self {
        Self {
            state: AppState::new(store, std::env::temp_dir()),
        }
    }

    async fn call(&self, req: Request<Body>) -> (StatusCode, Vec<u8>) {
        let resp = router(self.state.clone()).oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Vec<u8>) {
        self.call(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    async fn task(&self, annotator: &str) -> TaskResponse {
        let (status, body) = self.get(&format!("/api/task?annotator={annotator}")).await;
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
        serde_json::from_slice(&body).unwrap()
    }

    async fn card(&self, annotator: &str) -> chaingrade_annotation_service::TaskCard {
        match self.task(annotator).await {
            TaskResponse::Task { card } => *card,
            TaskResponse::Done => panic!("expected a card for {annotator}"),
        }
    }

    async fn post(&self, token: &str, label: &str) -> (StatusCode, Value) {
        let req = Request::post("/api/label")
            .header("content-type", "application/json")
            .body(Body::from(json!({ "token": token, "label": label }).to_string()))
            .unwrap();
        let (status, body) = self.call(req).await;
        (status, serde_json::from_slice(&body).unwrap())
    }

    async fn answer(&self, annotator: &str, label: &str) -> Ack {
        let card = self.card(annotator).await;
        let (status, body) = self.post(&card.token, label).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        serde_json::from_value(body).unwrap()
    }

    async fn progress(&self) -> ProgressReport {
        let (_, body) = self.get("/api/progress").await;
        serde_json::from_slice(&body).unwrap()
    }
}

/// Answers every card of an annotator's current record from a fixed policy.
async fn complete_record(client: &Client, annotator: &str, policy: impl Fn(LabelTask, usize) -> &'static str) -> Vec<(usize, LabelTask, String)> {
    let mut seq = Vec::new();
    loop {
        let card = client.card(annotator).await;
        let label = policy(card.task, card.step_index);
        let ack: Ack = {
            let (status, body) = client.post(&card.token, label).await;
            assert_eq!(status, StatusCode::OK, "{body}");
            serde_json::from_value(body).unwrap()
        };
        seq.push((card.step_index, card.task, label.to_string()));
        if ack.record_complete {
            return seq;
        }
    }
}

fn reasoning_policy(task: LabelTask, _: usize) -> &'static str {
    match task {
        LabelTask::StepType => "Reasoning",
        LabelTask::LogicCorrectness => "Correct",
        LabelTask::LogicRelevance => "Relevant",
        LabelTask::Informativeness => "Informative",
        _ => "Correct",
    }
}

#[tokio::test]
async fn fresh_record_offers_step_type_with_full_domain() {
    let client = Client::new(AnnotationStore::open(vec![record("r1", 2, "no-image")], None).unwrap());
    let card = client.card("alice").await;
    assert_eq!((card.step_index, card.task), (1, LabelTask::StepType));
    let keys: Vec<&str> = card.allowed_labels.iter().map(|l| l.key.as_str()).collect();
    assert_eq!(keys, LabelTask::StepType.domain());
    assert_eq!(card.context.current_step.as_deref(), Some("r1 step 1"));
    assert!(card.context.previous_steps.is_empty());
}

#[tokio::test]
async fn reasoning_answer_leads_to_logic_cards() {
    let client = Client::new(AnnotationStore::open(vec![record("r1", 1, "no-image")], None).unwrap());
    client.answer("alice", "Reasoning").await;
    let card = client.card("alice").await;
    assert_eq!(card.task, LabelTask::LogicCorrectness);
    client.answer("alice", "Correct").await;
    assert_eq!(client.card("alice").await.task, LabelTask::LogicRelevance);
}

#[tokio::test]
async fn error_type_card_names_its_trigger() {
    let client = Client::new(AnnotationStore::open(vec![record("r1", 1, "no-image")], None).unwrap());
    client.answer("alice", "Description").await;
    client.answer("alice", "PartiallyCorrect").await;
    let card = client.card("alice").await;
    assert_eq!(card.task, LabelTask::DescErrorType);
    let trigger = card.trigger.unwrap();
    assert_eq!(trigger.task, LabelTask::DescCorrectness);
    assert_eq!(trigger.label.display, "Partially Correct");
}

#[tokio::test]
async fn out_of_domain_label_is_rejected() {
    let client = Client::new(AnnotationStore::open(vec![record("r1", 1, "no-image")], None).unwrap());
    client.answer("alice", "Reasoning").await;
    let card = client.card("alice").await;
    let (status, body) = client.post(&card.token, "Maybe").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "label_outside_domain");
    assert_eq!(body["allowed"], json!(["Correct", "Incorrect"]));
    assert_eq!(client.progress().await.logged_votes, 1);
}

#[tokio::test]
async fn duplicate_submission_returns_same_ack_without_second_vote() {
    let client = Client::new(AnnotationStore::open(vec![record("r1", 1, "no-image")], None).unwrap());
    let card = client.card("alice").await;
    let (s1, first) = client.post(&card.token, "Both").await;
    let (s2, second) = client.post(&card.token, "Both").await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first, second);
    assert_eq!(client.progress().await.logged_votes, 1);
    let (s3, body) = client.post(&card.token, "Reasoning").await;
    assert_eq!(s3, StatusCode::CONFLICT, "{body}");
}

#[tokio::test]
async fn tokens_not_on_offer_are_stale_or_malformed() {
    let client = Client::new(AnnotationStore::open(vec![record("r1", 2, "no-image")], None).unwrap());
    client.card("alice").await;
    let (status, _) = client.post("alice:r1:2:StepType", "Reasoning").await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = client.post("garbage", "Reasoning").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = client.post("alice:nope:1:StepType", "Reasoning").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = client.get("/api/task?annotator=a:b").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn two_step_walkthrough_matches_stage_machine() {
    let client = Client::new(AnnotationStore::open(vec![record("r1", 2, "no-image")], None).unwrap());
    let seq = complete_record(&client, "alice", |task, step| match (task, step) {
        (LabelTask::StepType, 1) => "Description",
        (LabelTask::StepType, _) => "Reasoning",
        (LabelTask::DescCorrectness, _) => "FullyCorrect",
        (LabelTask::DescRelevance, _) => "ImageRelevant",
        (LabelTask::LogicCorrectness, _) => "Incorrect",
        (LabelTask::LogicErrorType, _) => "IntraStep",
        (LabelTask::LogicRelevance, _) => "Relevant",
        (LabelTask::Informativeness, _) => "Uninformative",
        (LabelTask::McotCorrectness, _) => "Incorrect",
        _ => "Correct",
    })
    .await;
    let expected = vec![
        (1, LabelTask::StepType, "Description"),
        (1, LabelTask::DescCorrectness, "FullyCorrect"),
        (1, LabelTask::DescRelevance, "ImageRelevant"),
        (2, LabelTask::StepType, "Reasoning"),
        (2, LabelTask::LogicCorrectness, "Incorrect"),
        (2, LabelTask::LogicErrorType, "IntraStep"),
        (2, LabelTask::LogicRelevance, "Relevant"),
        (2, LabelTask::Informativeness, "Uninformative"),
        (0, LabelTask::McotCorrectness, "Incorrect"),
        (0, LabelTask::PredictionCorrectness, "Correct"),
    ];
    let got: Vec<(usize, LabelTask, &str)> = seq.iter().map(|(s, t, l)| (*s, *t, l.as_str())).collect();
    assert_eq!(got, expected);
    assert_eq!(client.task("alice").await, TaskResponse::Done);
}

#[tokio::test]
async fn progress_starts_empty_and_matches_offline_agreement() {
    let client = Client::new(AnnotationStore::open(vec![record("r1", 1, "no-image")], None).unwrap());
    let empty = client.progress().await;
    assert!(empty.per_task.is_empty() && empty.ties.is_empty() && empty.agreement.is_empty());

    complete_record(&client, "alice", reasoning_policy).await;
    complete_record(&client, "bob", |task, step| match task {
        LabelTask::Informativeness => "Uninformative",
        _ => reasoning_policy(task, step),
    })
    .await;
    let progress = client.progress().await;
    assert_eq!(progress.logged_votes, 12);
    assert_eq!(progress.per_task.values().sum::<usize>(), 12);
    assert_eq!(progress.ties.get(&LabelTask::Informativeness), Some(&1));

    let (_, body) = client.get("/api/record/r1").await;
    let exported: McotRecord = serde_json::from_slice(&body).unwrap();
    for (&(_, task), set) in &vote_sets(&exported) {
        let labels: Vec<Vec<String>> = vec![set.votes.iter().map(|(_, l)| l.clone()).collect()];
        let direct = bennett_s(&labels, task.domain().len()).unwrap().s_score;
        assert_eq!(progress.agreement[&task], direct);
    }
}

#[tokio::test]
async fn round_robin_stops_at_three_annotators() {
    let client = Client::new(AnnotationStore::open(vec![record("a", 1, "no-image"), record("b", 1, "no-image")], None).unwrap());
    let firsts: Vec<String> = first_records(&client, &["u1", "u2", "u3", "u4", "u5", "u6"]).await;
    assert_eq!(firsts, vec!["a", "b", "a", "b", "a", "b"]);
    assert_eq!(client.task("u7").await, TaskResponse::Done);
}

async fn first_records(client: &Client, annotators: &[&str]) -> Vec<String> {
    let mut out = Vec::new();
    for a in annotators {
        out.push(client.card(a).await.record_id);
    }
    out
}

#[tokio::test]
async fn started_record_is_continued_first() {
    let client = Client::new(AnnotationStore::open(vec![record("a", 1, "no-image"), record("b", 1, "no-image")], None).unwrap());
    client.answer("u1", "Reasoning").await;
    client.card("u2").await;
    assert_eq!(client.card("u1").await.record_id, "a");
}

#[tokio::test]
async fn log_replay_restores_state_and_gold_matches_offline() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("votes.jsonl");
    let records = vec![record("r1", 1, "no-image")];
    {
        let client = Client::new(AnnotationStore::open(records.clone(), Some(&log)).unwrap());
        for who in ["u1", "u2"] {
            complete_record(&client, who, reasoning_policy).await;
        }
        client.answer("u3", "Both").await;
    }
    let lines = std::fs::read_to_string(&log).unwrap().lines().count();
    assert_eq!(lines, 13);

    let restored = Client::new(AnnotationStore::open(records.clone(), Some(&log)).unwrap());
    assert_eq!(restored.progress().await.logged_votes, lines);
    let card = restored.card("u3").await;
    assert_eq!(card.task, LabelTask::DescCorrectness);
    complete_record(&restored, "u3", |task, step| match task {
        LabelTask::DescCorrectness => "FullyCorrect",
        LabelTask::DescRelevance => "Both",
        _ => reasoning_policy(task, step),
    })
    .await;
    assert_eq!(restored.task("u4").await, TaskResponse::Done);

    let (_, body) = restored.get("/api/record/r1").await;
    let exported: McotRecord = serde_json::from_slice(&body).unwrap();
    let mut offline = records[0].clone();
    offline.annotations = exported.annotations.clone();
    offline.annotations.reverse();
    let a = aggregate_record(&exported, RelevanceMode::Lenient).unwrap();
    let b = aggregate_record(&offline, RelevanceMode::Lenient).unwrap();
    assert_eq!(a.gold, b.gold);
}

#[tokio::test]
async fn corrupt_log_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("votes.jsonl");
    std::fs::write(
        &log,
        "{\"seq\":0,\"annotator_id\":\"u\",\"record_id\":\"r1\",\"step_index\":1,\"task\":\"LogicCorrectness\",\"label\":\"Correct\"}\n",
    )
    .unwrap();
    assert!(AnnotationStore::open(vec![record("r1", 1, "no-image")], Some(&log)).is_err());
}

#[tokio::test]
async fn images_are_served_from_the_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pic.png"), b"\x89PNG fake").unwrap();
    let store = AnnotationStore::open(
        vec![record("img", 1, "pic.png"), record("txt", 1, "no-image"), record("gone", 1, "missing.png")],
        None,
    )
    .unwrap();
    let client = Client {
        state: AppState::new(store, dir.path()),
    };
    let (status, body) = client.get("/api/image/img").await;
    assert_eq!((status, body.as_slice()), (StatusCode::OK, &b"\x89PNG fake"[..]));
    assert_eq!(client.get("/api/image/txt").await.0, StatusCode::NO_CONTENT);
    assert_eq!(client.get("/api/image/gone").await.0, StatusCode::NOT_FOUND);
    assert_eq!(client.get("/api/record/nope").await.0, StatusCode::NOT_FOUND);
}

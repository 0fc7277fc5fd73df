//! Judge backends: a generic remote chat endpoint, scripted replay tables and
//! a constant responder.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{JudgeError, PromptBundle};

pub const TOKEN_ENV: &str = "JUDGE_API_TOKEN";

/// One call to a backend. `attempt` starts at 1.
#[derive(Debug, Clone, Copy)]
pub struct JudgeRequest<'a> {
    pub bundle: &'a PromptBundle,
    pub attempt: u32,
    pub trial: u32,
}

pub trait JudgeBackend: Send + Sync {
    fn complete(&self, request: &JudgeRequest<'_>) -> Result<String, JudgeError>;

    /// Short description echoed into reports.
    fn describe(&self) -> String;
}

#[derive(Debug, Clone)]
pub struct ConstantBackend {
    pub text: String,
}

impl ConstantBackend {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }
}

impl JudgeBackend for ConstantBackend {
    fn complete(&self, _: &JudgeRequest<'_>) -> Result<String, JudgeError> {
        Ok(self.text.clone())
    }

    fn describe(&self) -> String {
        format!("constant:{}", self.text)
    }
}

/// One row of a scripted table. Attempt `n` gets `responses[n - 1]`, and the
/// last response repeats once the list runs out. Rows without a trial apply
/// to every trial not listed explicitly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub record: String,
    pub step: usize,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<u32>,
    pub responses: Vec<String>,
}

type ScriptKey = (String, usize, String, Option<u32>);

#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    table: HashMap<ScriptKey, Vec<String>>,
    source: String,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let table = entries
            .into_iter()
            .map(|e| ((e.record, e.step, e.task, e.trial), e.responses))
            .collect();
        Self {
            table,
            source: "inline".into(),
        }
    }

    /// Loads a line-delimited table of [`ScriptEntry`] rows.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, JudgeError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| JudgeError::Config(format!("cannot read script {}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line)
                .map_err(|e| JudgeError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
            if entry.responses.is_empty() {
                return Err(JudgeError::Config(format!(
                    "{}:{}: entry has no responses",
                    path.display(),
                    i + 1
                )));
            }
            entries.push(entry);
        }
        let mut backend = Self::new(entries);
        backend.source = path.display().to_string();
        Ok(backend)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl JudgeBackend for ScriptedBackend {
    fn complete(&self, request: &JudgeRequest<'_>) -> Result<String, JudgeError> {
        let b = request.bundle;
        let task = b.task.key();
        let key = |trial| (b.record_id.clone(), b.step_index, task.clone(), trial);
        let responses = self
            .table
            .get(&key(Some(request.trial)))
            .or_else(|| self.table.get(&key(None)))
            .ok_or_else(|| JudgeError::ScriptMiss {
                record: b.record_id.clone(),
                step: b.step_index,
                task: task.clone(),
                trial: request.trial,
            })?;
        let idx = (request.attempt.max(1) as usize - 1).min(responses.len().saturating_sub(1));
        responses
            .get(idx)
            .cloned()
            .ok_or_else(|| JudgeError::Config(format!("empty script entry for {}", b.record_id)))
    }

    fn describe(&self) -> String {
        format!("scripted:{}", self.source)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_max_tokens() -> u32 {
    64
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    text: &'a str,
    image_refs: &'a [String],
}

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    text: String,
}

/// Single-turn chat over HTTP: POST `{model, messages, max_tokens}`, read `{text}`.
/// The bearer token, if any, comes from `JUDGE_API_TOKEN`.
pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    token: Option<String>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, JudgeError> {
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Self::with_token(config, token)
    }

    pub fn with_token(config: RemoteConfig, token: Option<String>) -> Result<Self, JudgeError> {
        if config.endpoint.is_empty() {
            return Err(JudgeError::Config("remote judge needs an endpoint".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| JudgeError::Config(e.to_string()))?;
        Ok(Self { config, client, token })
    }
}

impl JudgeBackend for RemoteBackend {
    fn complete(&self, request: &JudgeRequest<'_>) -> Result<String, JudgeError> {
        let b = request.bundle;
        let body = WireRequest {
            model: &self.config.model,
            messages: vec![
                WireMessage {
                    role: "system",
                    text: &b.system,
                    image_refs: &[],
                },
                WireMessage {
                    role: "user",
                    text: &b.body,
                    image_refs: &b.image_refs,
                },
            ],
            max_tokens: self.config.max_tokens,
        };
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| JudgeError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(JudgeError::Transport(format!("endpoint returned {status}")));
        }
        resp.json::<WireResponse>()
            .map(|r| r.text)
            .map_err(|e| JudgeError::Transport(format!("bad response body: {e}")))
    }

    fn describe(&self) -> String {
        format!("remote:{}@{}", self.config.model, self.config.endpoint)
    }
}

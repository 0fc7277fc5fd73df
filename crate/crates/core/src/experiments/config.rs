//! Experiment configuration, read from TOML.
//!
//! ```toml
//! dataset = "mcot20.jsonl"
//! judge = "scripted:judge_table.jsonl"   # or "constant:<text>", "remote", "gold-echo"
//! split = "Hard"                          # optional
//! tasks = ["StepType", "LogicCorrectness"]
//! setting = "few-shot"                    # or "zero-shot"
//! shots = 1
//! modality = "multimodal"                 # or "textual"
//! seeds = [0, 1, 2]                       # few-shot prompt sets, one per trial
//! method = "miceval-all"
//! type_source = "gold"                    # or "judge"
//! trials = 3
//! relevance_mode = "lenient"
//! orientation = "pred-dependent"
//! retry_limit = 3
//! max_in_flight = 8
//! step_level = false
//!
//! [remote]
//! endpoint = "http://localhost:8080/v1/judge"
//! model = "some-model"
//! ```
//!
//! Relative paths resolve against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::judge::{ConstantBackend, JudgeBackend, Modality, RemoteBackend, RemoteConfig, ScriptedBackend};
use crate::metrics::ScoringMethod;
use crate::model::{LabelTask, RelevanceMode, Split};
use crate::stats::Orientation;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShotSetting {
    #[default]
    ZeroShot,
    FewShot,
}

/// Where MiCEvalType takes step types from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeSource {
    Judge,
    #[default]
    Gold,
}

impl FromStr for ShotSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero-shot" => Ok(ShotSetting::ZeroShot),
            "few-shot" => Ok(ShotSetting::FewShot),
            _ => Err(format!("unknown setting {s:?}; expected zero-shot or few-shot")),
        }
    }
}

impl FromStr for TypeSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "judge" => Ok(TypeSource::Judge),
            "gold" => Ok(TypeSource::Gold),
            _ => Err(format!("unknown type source {s:?}; expected judge or gold")),
        }
    }
}

fn default_tasks() -> Vec<LabelTask> {
    LabelTask::PAIRWISE.to_vec()
}
fn default_shots() -> usize {
    1
}
fn default_trials() -> u32 {
    3
}
fn default_retry() -> u32 {
    crate::judge::DEFAULT_RETRY_LIMIT
}
fn default_in_flight() -> usize {
    8
}
fn default_method() -> ScoringMethod {
    ScoringMethod::MiCEvalAll
}

mod method_serde {
    use super::ScoringMethod;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &ScoringMethod, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(m.cli_name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ScoringMethod, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

mod display_serde {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub judge: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<LabelTask>,
    #[serde(default)]
    pub setting: ShotSetting,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default, with = "modality_serde")]
    pub modality: Modality,
    /// Few-shot prompt-set seeds; trial `t` uses `seeds[t % len]`. Empty means `[seed]`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub seed: u64,
    /// Demonstration pool; defaults to the evaluated dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_pool: Option<PathBuf>,
    #[serde(default = "default_method", with = "method_serde")]
    pub method: ScoringMethod,
    #[serde(default)]
    pub type_source: TypeSource,
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default, with = "display_serde")]
    pub relevance_mode: RelevanceMode,
    #[serde(default, with = "display_serde")]
    pub orientation: Orientation,
    #[serde(default = "default_retry")]
    pub retry_limit: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Also report step-level correlations.
    #[serde(default)]
    pub step_level: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteConfig>,
}

mod modality_serde {
    use super::Modality;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Modality, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match m {
            Modality::Multimodal => "multimodal",
            Modality::Textual => "textual",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Modality, D::Error> {
        match String::deserialize(d)?.as_str() {
            "multimodal" => Ok(Modality::Multimodal),
            "textual" => Ok(Modality::Textual),
            other => Err(serde::de::Error::custom(format!("unknown modality {other:?}"))),
        }
    }
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>, judge: impl Into<String>) -> Self {
        Self {
            dataset: dataset.into(),
            judge: judge.into(),
            split: None,
            tasks: default_tasks(),
            setting: ShotSetting::ZeroShot,
            shots: default_shots(),
            modality: Modality::Multimodal,
            seeds: Vec::new(),
            seed: 0,
            shot_pool: None,
            method: default_method(),
            type_source: TypeSource::Gold,
            trials: default_trials(),
            relevance_mode: RelevanceMode::Lenient,
            orientation: Orientation::PredDependent,
            retry_limit: default_retry(),
            max_in_flight: default_in_flight(),
            step_level: false,
            remote: None,
        }
    }

    /// Parses TOML and resolves relative paths against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        if self.dataset.is_relative() {
            self.dataset = base.join(&self.dataset);
        }
        if let Some(pool) = &self.shot_pool {
            if pool.is_relative() {
                self.shot_pool = Some(base.join(pool));
            }
        }
        if let Some(path) = self.judge.strip_prefix("scripted:") {
            let p = Path::new(path);
            if p.is_relative() {
                self.judge = format!("scripted:{}", base.join(p).display());
            }
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(1..=4).contains(&self.shots) {
            return Err(ExperimentError::Config(format!("shots must be in 1..=4, got {}", self.shots)));
        }
        if self.trials == 0 {
            return Err(ExperimentError::Config("trials must be at least 1".into()));
        }
        if self.tasks.is_empty() {
            return Err(ExperimentError::Config("no tasks selected".into()));
        }
        Ok(())
    }

    /// Shot-sampling seed for a trial.
    pub fn shot_seed(&self, trial: u32) -> u64 {
        if self.seeds.is_empty() {
            self.seed
        } else {
            self.seeds[trial as usize % self.seeds.len()]
        }
    }
}

/// Builds a backend from a judge spec other than `gold-echo`, which needs the dataset.
pub fn build_backend(spec: &str, remote: Option<&RemoteConfig>) -> Result<Box<dyn JudgeBackend>, ExperimentError> {
    if let Some(path) = spec.strip_prefix("scripted:") {
        return Ok(Box::new(ScriptedBackend::load(path)?));
    }
    if let Some(text) = spec.strip_prefix("constant:") {
        return Ok(Box::new(ConstantBackend::new(text)));
    }
    if spec == "remote" {
        let cfg = remote.ok_or_else(|| ExperimentError::Config("judge = \"remote\" needs an endpoint (a [remote] table or --endpoint)".into()))?;
        return Ok(Box::new(RemoteBackend::new(cfg.clone())?));
    }
    Err(ExperimentError::Config(format!(
        "unknown judge spec {spec:?}; expected scripted:<path>, constant:<text>, remote or gold-echo"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_path_resolution() {
        let cfg = ExperimentConfig::from_toml(
            "dataset = \"data.jsonl\"\njudge = \"scripted:table.jsonl\"\n",
            Path::new("/tmp/exp"),
        )
        .unwrap();
        assert_eq!(cfg.dataset, PathBuf::from("/tmp/exp/data.jsonl"));
        assert_eq!(cfg.judge, "scripted:/tmp/exp/table.jsonl");
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.retry_limit, 3);
        assert_eq!(cfg.shots, 1);
        assert_eq!(cfg.tasks.len(), 9);
        assert_eq!(cfg.method, ScoringMethod::MiCEvalAll);
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
dataset = "/d.jsonl"
judge = "constant:Yes"
split = "Hard"
tasks = ["StepType", "McotCorrectness"]
setting = "few-shot"
shots = 4
modality = "textual"
seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8]
method = "miceval-type"
type_source = "judge"
trials = 2
relevance_mode = "strict"
orientation = "ref-dependent"
retry_limit = 1
max_in_flight = 2
step_level = true
"#;
        let cfg = ExperimentConfig::from_toml(text, Path::new("/")).unwrap();
        assert_eq!(cfg.setting, ShotSetting::FewShot);
        assert_eq!(cfg.modality, Modality::Textual);
        assert_eq!(cfg.method, ScoringMethod::MiCEvalType);
        assert_eq!(cfg.type_source, TypeSource::Judge);
        assert_eq!(cfg.relevance_mode, RelevanceMode::Strict);
        assert_eq!(cfg.orientation, Orientation::RefDependent);
        assert_eq!(cfg.shot_seed(10), 1);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let base = "dataset = \"d\"\njudge = \"constant:x\"\n";
        assert!(ExperimentConfig::from_toml(&format!("{base}shots = 5\n"), Path::new("/")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{base}trials = 0\n"), Path::new("/")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{base}bogus = 1\n"), Path::new("/")).is_err());
        assert!(build_backend("carrier-pigeon", None).is_err());
        assert!(build_backend("remote", None).is_err());
    }
}

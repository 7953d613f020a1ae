use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::providers::{ChatConfig, ProvidersConfig};
use crate::tasks::{EvaluatorConfig, Task, TaskConfig};

fn d_generations() -> u64 {
    100
}
fn d_warmup() -> u64 {
    10
}
fn d_sln_interval() -> u64 {
    10
}
fn d_clusters() -> usize {
    5
}
fn d_epsilon() -> f64 {
    0.2
}
fn d_capacity() -> usize {
    100
}
fn d_sa_parse_attempts() -> u32 {
    2
}
fn d_sln_budget() -> usize {
    crate::navigation::DEFAULT_PROMPT_BUDGET
}
fn d_output_dir() -> PathBuf {
    PathBuf::from("run")
}

/// Every knob of a run. Omitted fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_generations")]
    pub generations: u64,
    #[serde(default = "d_warmup")]
    pub warmup: u64,
    #[serde(default = "d_sln_interval")]
    pub sln_interval: u64,
    #[serde(default = "d_clusters")]
    pub clusters: usize,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_capacity")]
    pub capacity: usize,
    #[serde(default)]
    pub seed: u64,
    pub task: TaskConfig,
    #[serde(default)]
    pub providers: ProvidersConfig,
    #[serde(default)]
    pub evaluator: EvaluatorConfig,
    /// Starting program; the evaluator's default seed for the task when absent.
    #[serde(default)]
    pub seed_program: Option<String>,
    /// Articulation attempts per generation before falling back to the base path.
    #[serde(default = "d_sa_parse_attempts")]
    pub sa_parse_attempts: u32,
    #[serde(default = "d_sln_budget")]
    pub sln_prompt_budget: usize,
    #[serde(default = "d_output_dir")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<FieldError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        f.write_str(&lines.join("\n"))
    }
}

impl std::error::Error for ConfigErrors {}

impl RunConfig {
    /// A config with every default and the given task.
    pub fn for_task(task: TaskConfig) -> Self {
        serde_json::from_value(serde_json::json!({ "task": task })).expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigErrors> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| {
            ConfigErrors(vec![FieldError { field: "config".into(), message: e.to_string() }])
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative scenario paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigErrors(vec![FieldError { field: "config".into(), message: format!("{}: {e}", path.display()) }])
        })?;
        let mut config = Self::from_json(&text)?;
        if let ChatConfig::Mock { scenario: Some(s) } = &mut config.providers.chat {
            if s.is_relative() {
                *s = path.parent().unwrap_or(Path::new(".")).join(&*s);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errors = Vec::new();
        let mut check = |ok: bool, field: &str, message: String| {
            if !ok {
                errors.push(FieldError { field: field.into(), message });
            }
        };
        check(self.generations >= 1, "generations", format!("must be at least 1 (got {})", self.generations));
        check(self.sln_interval >= 1, "sln_interval", format!("must be at least 1 (got {})", self.sln_interval));
        check(self.clusters >= 1, "clusters", format!("must be at least 1 (got {})", self.clusters));
        check(
            (0.0..=1.0).contains(&self.epsilon),
            "epsilon",
            format!("must be in [0, 1] (got {})", self.epsilon),
        );
        check(self.capacity >= 2, "capacity", format!("must be at least 2 (got {})", self.capacity));
        check(
            self.sa_parse_attempts >= 1,
            "sa_parse_attempts",
            format!("must be at least 1 (got {})", self.sa_parse_attempts),
        );
        check(
            self.sln_prompt_budget >= 1,
            "sln_prompt_budget",
            format!("must be at least 1 (got {})", self.sln_prompt_budget),
        );
        let p = &self.providers;
        check(p.timeout_s > 0.0, "providers.timeout_s", format!("must be positive (got {})", p.timeout_s));
        check(
            p.embedding.dimension() >= 1,
            "providers.embedding.dim",
            "must be at least 1".into(),
        );
        for (model, price) in &p.prices.0 {
            check(
                price.input_per_mtok >= 0.0 && price.output_per_mtok >= 0.0,
                &format!("providers.prices.{model}"),
                "prices must be non-negative".into(),
            );
        }
        if let EvaluatorConfig::Subprocess { runner, timeout_s } = &self.evaluator {
            check(!runner.is_empty(), "evaluator.runner", "must name a command".into());
            check(*timeout_s > 0.0, "evaluator.timeout_s", format!("must be positive (got {timeout_s})"));
        }
        if let Some(seed) = &self.seed_program {
            check(!seed.trim().is_empty(), "seed_program", "must not be empty".into());
        }
        if let Err(crate::tasks::TaskError::Invalid { field, message }) = Task::new(self.task.clone()) {
            errors.push(FieldError { field: format!("task.{field}"), message });
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errors))
        }
    }

    /// Hash of everything that determines the run's course (the output
    /// directory is excluded so a run can be moved).
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("object").remove("output_dir");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

//! Task definitions, verifiers and candidate evaluation.
//!
//! Candidates never report their own fitness. They emit data (a placement or
//! per-instance answers) and the task scores it here.

pub mod geometry;
pub mod sandbox;
pub mod sequences;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::archive::BehaviorVector;
pub use geometry::{
    verify_minmax, verify_rect_packing, verify_square_packing, Circle, Violation, ViolationReport,
    Wall, TOLERANCE,
};
pub use sandbox::{execute_candidate, ExecError, RunnerOutput, CANDIDATE_FILE};
pub use sequences::{generate_instances, Family, SequenceInstance};

pub const SQUARE_REFERENCE: f64 = 2.635;
pub const RECT_REFERENCE: f64 = 2.3658321334167627;

/// Best known min/max distance ratio for 16 points, `1/sqrt(12.889266112)`.
pub fn minmax_reference() -> f64 {
    1.0 / 12.889266112f64.sqrt()
}

fn default_square_n() -> usize {
    26
}
fn default_rect_n() -> usize {
    21
}
fn default_minmax_n() -> usize {
    16
}
fn default_instances() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    CirclePackingSquare {
        #[serde(default = "default_square_n")]
        n: usize,
    },
    CirclePackingRect {
        #[serde(default = "default_rect_n")]
        n: usize,
    },
    MinmaxDistance {
        #[serde(default = "default_minmax_n")]
        n: usize,
    },
    IntegerSequences {
        #[serde(default = "default_instances")]
        instances: usize,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("task.{field}: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Failure {
    Violation { report: ViolationReport },
    Protocol { message: String },
    Timeout { timeout_s: f64 },
    Crash { exit_code: Option<i32>, message: String },
    Launch { message: String },
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Violation { report } => write!(f, "constraint violation: {report}"),
            Failure::Protocol { message } => write!(f, "protocol error: {message}"),
            Failure::Timeout { timeout_s } => write!(f, "timed out after {timeout_s} s"),
            Failure::Crash { exit_code, message } => write!(f, "exit {exit_code:?}: {message}"),
            Failure::Launch { message } => write!(f, "launch failed: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    /// Present iff `failure` is absent.
    pub fitness: Option<f64>,
    pub behavior_vector: Option<BehaviorVector>,
    pub failure: Option<Failure>,
    /// Instances whose answer was null (the candidate raised on them).
    pub crashed_instances: Vec<usize>,
    pub wall_s: f64,
    pub stderr_excerpt: String,
}

impl EvaluationResult {
    fn failed(failure: Failure) -> Self {
        Self {
            fitness: None,
            behavior_vector: None,
            failure: Some(failure),
            crashed_instances: Vec::new(),
            wall_s: 0.0,
            stderr_excerpt: String::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct PlacementDoc {
    placement: PlacementBody,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlacementBody {
    circles: Option<Vec<[f64; 3]>>,
    points: Option<Vec<[f64; 2]>>,
    width: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct AnswersDoc {
    answers: Vec<Value>,
}

/// A configured task. The instance task carries its generated instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    config: TaskConfig,
    instances: Vec<SequenceInstance>,
}

impl Task {
    pub fn new(config: TaskConfig) -> Result<Self, TaskError> {
        let invalid = |field, message: &str| TaskError::Invalid { field, message: message.into() };
        let instances = match &config {
            TaskConfig::CirclePackingSquare { n } | TaskConfig::CirclePackingRect { n } if *n == 0 => {
                return Err(invalid("n", "must be at least 1"));
            }
            TaskConfig::MinmaxDistance { n } if *n < 2 => return Err(invalid("n", "must be at least 2")),
            TaskConfig::IntegerSequences { instances: 0, .. } => {
                return Err(invalid("instances", "must be at least 1"));
            }
            TaskConfig::IntegerSequences { instances, seed } => generate_instances(*instances, *seed),
            _ => Vec::new(),
        };
        Ok(Self { config, instances })
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    /// Identifier passed to the runner on its command line.
    pub fn id(&self) -> &'static str {
        match self.config {
            TaskConfig::CirclePackingSquare { .. } => "circle_packing_square",
            TaskConfig::CirclePackingRect { .. } => "circle_packing_rect",
            TaskConfig::MinmaxDistance { .. } => "minmax_distance",
            TaskConfig::IntegerSequences { .. } => "integer_sequences",
        }
    }

    pub fn instances(&self) -> &[SequenceInstance] {
        &self.instances
    }

    /// Length of behavior vectors, for instance-based tasks.
    pub fn behavior_len(&self) -> Option<usize> {
        matches!(self.config, TaskConfig::IntegerSequences { .. }).then_some(self.instances.len())
    }

    /// Published best value for the default problem size, if one exists.
    pub fn reference(&self) -> Option<f64> {
        match self.config {
            TaskConfig::CirclePackingSquare { n: 26 } => Some(SQUARE_REFERENCE),
            TaskConfig::CirclePackingRect { n: 21 } => Some(RECT_REFERENCE),
            TaskConfig::MinmaxDistance { n: 16 } => Some(minmax_reference()),
            TaskConfig::IntegerSequences { .. } => Some(1.0),
            _ => None,
        }
    }

    pub fn brief(&self) -> String {
        match self.config {
            TaskConfig::CirclePackingSquare { n } => format!(
                "Task: place {n} disjoint circles inside the unit square [0,1] x [0,1] so that the sum of their radii is as large as possible.\n\
                 Write a Python module defining construct_packing(), which returns a list of {n} (x, y, r) tuples. \
                 Every circle must lie inside the square and no two circles may overlap (tolerance 1e-9). \
                 Fitness is the sum of radii; invalid packings score nothing."
            ),
            TaskConfig::CirclePackingRect { n } => format!(
                "Task: place {n} disjoint circles inside a rectangle of perimeter 4 (width w, height 2 - w, with 0 < w < 2 of your choosing) so that the sum of their radii is as large as possible.\n\
                 Write a Python module defining construct_packing(), which returns (circles, w) where circles is a list of {n} (x, y, r) tuples inside [0, w] x [0, 2 - w]. \
                 No two circles may overlap (tolerance 1e-9). Fitness is the sum of radii."
            ),
            TaskConfig::MinmaxDistance { n } => format!(
                "Task: place {n} points in the unit square [0,1] x [0,1] to maximize the ratio of the smallest to the largest pairwise distance.\n\
                 Write a Python module defining construct_points(), which returns a list of {n} (x, y) tuples. \
                 Fitness is d_min / d_max; coincident points score 0."
            ),
            TaskConfig::IntegerSequences { instances, .. } => format!(
                "Task: predict the next term of integer sequences. Each of the {instances} validation instances is a list of five integers drawn from an arithmetic, geometric, quadratic or Fibonacci-like sequence.\n\
                 Write a Python module defining solve(instance), which receives the list of five integers and returns the sixth as an int. \
                 Fitness is the fraction of instances answered correctly."
            ),
        }
    }

    /// Extra workspace files handed to the runner.
    pub fn workspace_files(&self) -> Vec<(String, String)> {
        if self.instances.is_empty() {
            return Vec::new();
        }
        let prefixes: Vec<&Vec<i64>> = self.instances.iter().map(|i| &i.prefix).collect();
        vec![("instances.json".into(), serde_json::to_string(&prefixes).expect("serializable"))]
    }

    /// Scores one candidate protocol document.
    pub fn score_output(&self, document: &Value) -> EvaluationResult {
        match self.config {
            TaskConfig::IntegerSequences { .. } => self.score_answers(document),
            _ => self.score_placement(document),
        }
    }

    fn score_placement(&self, document: &Value) -> EvaluationResult {
        let protocol = |message: String| EvaluationResult::failed(Failure::Protocol { message });
        let body = match PlacementDoc::deserialize(document) {
            Ok(doc) => doc.placement,
            Err(e) => return protocol(format!("expected {{\"placement\": ...}}: {e}")),
        };
        let circles = || -> Result<Vec<Circle>, String> {
            body.circles
                .as_ref()
                .map(|cs| cs.iter().map(|c| Circle::new(c[0], c[1], c[2])).collect())
                .ok_or_else(|| "placement has no \"circles\"".to_string())
        };
        let verdict = match self.config {
            TaskConfig::CirclePackingSquare { n } => match circles() {
                Ok(cs) => verify_square_packing(&cs, n, TOLERANCE),
                Err(m) => return protocol(m),
            },
            TaskConfig::CirclePackingRect { n } => match (circles(), body.width) {
                (Ok(cs), Some(w)) => verify_rect_packing(&cs, w, n, TOLERANCE),
                (Err(m), _) => return protocol(m),
                (_, None) => return protocol("placement has no \"width\"".into()),
            },
            TaskConfig::MinmaxDistance { n } => match &body.points {
                Some(ps) => {
                    let ps: Vec<(f64, f64)> = ps.iter().map(|p| (p[0], p[1])).collect();
                    verify_minmax(&ps, n, true, TOLERANCE)
                }
                None => return protocol("placement has no \"points\"".into()),
            },
            TaskConfig::IntegerSequences { .. } => unreachable!("instance task has no placement"),
        };
        match verdict {
            Ok(fitness) => EvaluationResult {
                fitness: Some(fitness),
                behavior_vector: None,
                failure: None,
                crashed_instances: Vec::new(),
                wall_s: 0.0,
                stderr_excerpt: String::new(),
            },
            Err(report) => EvaluationResult::failed(Failure::Violation { report }),
        }
    }

    fn score_answers(&self, document: &Value) -> EvaluationResult {
        let answers = match AnswersDoc::deserialize(document) {
            Ok(doc) => doc.answers,
            Err(e) => {
                return EvaluationResult::failed(Failure::Protocol {
                    message: format!("expected {{\"answers\": [...]}}: {e}"),
                })
            }
        };
        if answers.len() != self.instances.len() {
            return EvaluationResult::failed(Failure::Protocol {
                message: format!("expected {} answers, got {}", self.instances.len(), answers.len()),
            });
        }
        let mut crashed = Vec::new();
        let bits: Vec<bool> = answers
            .iter()
            .zip(&self.instances)
            .enumerate()
            .map(|(k, (given, instance))| {
                if given.is_null() {
                    crashed.push(k);
                }
                given.as_i64() == Some(instance.answer)
                    || given.as_f64().is_some_and(|x| x == instance.answer as f64)
            })
            .collect();
        let b = BehaviorVector(bits);
        EvaluationResult {
            fitness: Some(b.mean()),
            behavior_vector: Some(b),
            failure: None,
            crashed_instances: crashed,
            wall_s: 0.0,
            stderr_excerpt: String::new(),
        }
    }

    /// A valid starting program whose text is the protocol document itself.
    pub fn literal_seed(&self) -> String {
        let doc = match self.config {
            TaskConfig::CirclePackingSquare { n } | TaskConfig::CirclePackingRect { n } => {
                let mut doc = serde_json::json!({ "placement": { "circles": grid_circles(n) } });
                if matches!(self.config, TaskConfig::CirclePackingRect { .. }) {
                    doc["placement"]["width"] = 1.0.into();
                }
                doc
            }
            TaskConfig::MinmaxDistance { n } => {
                let side = (n as f64).sqrt().ceil() as usize;
                let step = 1.0 / (side.max(2) - 1) as f64;
                let points: Vec<[f64; 2]> =
                    (0..n).map(|k| [(k % side) as f64 * step, (k / side) as f64 * step]).collect();
                serde_json::json!({ "placement": { "points": points } })
            }
            TaskConfig::IntegerSequences { instances, .. } => {
                serde_json::json!({ "answers": vec![0; instances] })
            }
        };
        serde_json::to_string_pretty(&doc).expect("serializable")
    }

    /// A valid starting program for the Python runner.
    pub fn python_seed(&self) -> String {
        match self.config {
            TaskConfig::CirclePackingSquare { n } => format!(
                "def construct_packing():\n    side = 1\n    while side * side < {n}:\n        side += 1\n    r = 0.5 / side\n    circles = []\n    for k in range({n}):\n        i, j = k % side, k // side\n        circles.append(((2 * i + 1) * r, (2 * j + 1) * r, r))\n    return circles\n"
            ),
            TaskConfig::CirclePackingRect { n } => format!(
                "def construct_packing():\n    side = 1\n    while side * side < {n}:\n        side += 1\n    r = 0.5 / side\n    circles = []\n    for k in range({n}):\n        i, j = k % side, k // side\n        circles.append(((2 * i + 1) * r, (2 * j + 1) * r, r))\n    return circles, 1.0\n"
            ),
            TaskConfig::MinmaxDistance { n } => format!(
                "def construct_points():\n    side = 2\n    while side * side < {n}:\n        side += 1\n    step = 1.0 / (side - 1)\n    return [((k % side) * step, (k // side) * step) for k in range({n})]\n"
            ),
            TaskConfig::IntegerSequences { .. } => "def solve(instance):\n    return instance[-1]\n".into(),
        }
    }
}

/// `n` equal circles on the smallest square grid holding them, inside the unit square.
fn grid_circles(n: usize) -> Vec<[f64; 3]> {
    let side = (1..).find(|s| s * s >= n).unwrap_or(1);
    let r = 0.5 / side as f64;
    (0..n)
        .map(|k| {
            let (i, j) = ((k % side) as f64, (k / side) as f64);
            [(2.0 * i + 1.0) * r, (2.0 * j + 1.0) * r, r]
        })
        .collect()
}

fn default_runner() -> Vec<String> {
    vec!["stratevo-runner".into()]
}

fn default_timeout_s() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaluatorConfig {
    /// The program text is the protocol document; nothing is executed.
    #[default]
    Literal,
    Subprocess {
        #[serde(default = "default_runner")]
        runner: Vec<String>,
        #[serde(default = "default_timeout_s")]
        timeout_s: f64,
    },
}

impl EvaluatorConfig {
    pub fn build(&self) -> Box<dyn Evaluator> {
        match self {
            EvaluatorConfig::Literal => Box::new(LiteralEvaluator),
            EvaluatorConfig::Subprocess { runner, timeout_s } => Box::new(SubprocessEvaluator {
                runner: runner.clone(),
                timeout: Duration::from_secs_f64(*timeout_s),
            }),
        }
    }

    pub fn default_seed(&self, task: &Task) -> String {
        match self {
            EvaluatorConfig::Literal => task.literal_seed(),
            EvaluatorConfig::Subprocess { .. } => task.python_seed(),
        }
    }
}

pub trait Evaluator: Send + Sync {
    fn evaluate(&self, program: &str, task: &Task) -> EvaluationResult;
}

/// Reads the program text as the candidate's stdout document.
#[derive(Debug, Clone, Copy, Default)]
pub struct LiteralEvaluator;

impl Evaluator for LiteralEvaluator {
    fn evaluate(&self, program: &str, task: &Task) -> EvaluationResult {
        match serde_json::from_str::<Value>(program.trim()) {
            Ok(doc) => task.score_output(&doc),
            Err(e) => EvaluationResult::failed(Failure::Protocol {
                message: format!("program is not a JSON document: {e}"),
            }),
        }
    }
}

/// Runs the program through the external runner.
#[derive(Debug, Clone)]
pub struct SubprocessEvaluator {
    pub runner: Vec<String>,
    pub timeout: Duration,
}

impl Evaluator for SubprocessEvaluator {
    fn evaluate(&self, program: &str, task: &Task) -> EvaluationResult {
        match execute_candidate(program, task.id(), &task.workspace_files(), &self.runner, self.timeout) {
            Ok(out) => {
                let mut result = task.score_output(&out.document);
                result.wall_s = out.wall_s;
                result.stderr_excerpt = out.stderr;
                result
            }
            Err(e) => {
                let stderr = e.stderr().to_string();
                let failure = match e {
                    ExecError::Timeout { timeout_s, .. } => Failure::Timeout { timeout_s },
                    ExecError::Candidate { exit_code, stdout, .. } => {
                        Failure::Crash { exit_code, message: stdout }
                    }
                    ExecError::Malformed { message, .. } => Failure::Protocol { message },
                    ExecError::Launch(message) => Failure::Launch { message },
                };
                let mut result = EvaluationResult::failed(failure);
                result.stderr_excerpt = stderr;
                result
            }
        }
    }
}

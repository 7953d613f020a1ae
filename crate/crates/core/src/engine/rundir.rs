//! Run-directory layout, record types and crash-safe persistence.
//!
//! Every record carries the generation that produced it. A generation's
//! records are appended first and the checkpoint is replaced afterwards, so
//! on resume anything newer than the checkpoint is discarded.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::ops::Route;
use super::RunError;
use crate::navigation::LandscapeGuidance;
use crate::providers::UsageRecord;
use crate::tasks::EvaluationResult;

pub const HEADER: &str = "header.json";
pub const ARCHIVE_LOG: &str = "archive.jsonl";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const GUIDANCE_LOG: &str = "guidance.jsonl";
pub const TRANSCRIPT: &str = "transcript.jsonl";
pub const EVALUATIONS: &str = "evaluations.jsonl";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const SUMMARY: &str = "summary.json";
pub const LOCK: &str = "run.lock";

/// Files that make up the deterministic record of a run.
pub const RUN_LOGS: [&str; 5] = [ARCHIVE_LOG, TRAJECTORY, GUIDANCE_LOG, TRANSCRIPT, EVALUATIONS];

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub chat_calls: u64,
    pub failed_chat_calls: u64,
    pub embedding_calls: u64,
    pub sln_refreshes: u64,
    pub sln_parse_failures: u64,
    pub sa_parse_failures: u64,
    pub sa_fallbacks: u64,
    pub base_generations: u64,
    pub strategy_generations: u64,
    pub skipped_generations: u64,
    pub total_cost_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Last fully persisted generation (0 = seed).
    pub generation: u64,
    /// ChaCha word position, as a decimal string (u128).
    pub rng_word_pos: String,
    pub next_id: u64,
    pub cumulative_cost_usd: f64,
    pub best_so_far: f64,
    pub guidance: Option<LandscapeGuidance>,
    pub totals: Totals,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub generation: u64,
    pub fitness: Option<f64>,
    pub best_so_far: f64,
    pub cumulative_cost_usd: f64,
    pub route: Route,
    pub guidance_gen: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub generation: u64,
    #[serde(flatten)]
    pub call: UsageRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceRecord {
    pub generation: u64,
    pub guidance: LandscapeGuidance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub generation: u64,
    pub candidate_id: Option<u64>,
    pub result: EvaluationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub task: String,
    pub completed: bool,
    pub generations_completed: u64,
    pub generations: u64,
    pub best_id: u64,
    pub best_fitness: f64,
    pub best_generation: u64,
    pub reference: Option<f64>,
    pub total_cost_usd: f64,
    pub totals: Totals,
}

/// Paths inside one run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn read_header(&self) -> Result<Header, RunError> {
        let path = self.path(HEADER);
        if !path.exists() {
            return Err(RunError::NotARun(self.root.clone()));
        }
        read_json(&path)
    }

    pub fn read_checkpoint(&self) -> Result<Option<Checkpoint>, RunError> {
        let path = self.path(CHECKPOINT);
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    /// Takes the run lock; fails if another process holds it.
    pub fn lock(&self) -> Result<File, RunError> {
        let path = self.path(LOCK);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        match file.try_lock() {
            Ok(()) => Ok(file),
            Err(fs::TryLockError::WouldBlock) => Err(RunError::Locked(self.root.clone())),
            Err(fs::TryLockError::Error(e)) => Err(RunError::Io { path, source: e }),
        }
    }

    pub fn append(&self, name: &str, text: &str) -> Result<(), RunError> {
        if text.is_empty() {
            return Ok(());
        }
        let path = self.path(name);
        let mut file =
            OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        file.write_all(text.as_bytes()).map_err(io_err(&path))?;
        file.flush().map_err(io_err(&path))
    }

    /// Replaces `name` atomically via a temporary file and rename.
    pub fn write_atomic(&self, name: &str, text: &str) -> Result<(), RunError> {
        let path = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp"));
        fs::write(&tmp, text).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Drops every record newer than `generation` from the run logs, plus a
    /// torn final line left by an interrupted write.
    pub fn truncate_logs(&self, generation: u64) -> Result<(), RunError> {
        for name in [ARCHIVE_LOG, GUIDANCE_LOG, TRANSCRIPT, EVALUATIONS] {
            self.retain(name, generation, false)?;
        }
        self.retain(TRAJECTORY, generation, true)
    }

    fn retain(&self, name: &str, generation: u64, csv: bool) -> Result<(), RunError> {
        let path = self.path(name);
        if !path.exists() {
            return Ok(());
        }
        let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
        let lines = complete_lines(&raw);
        let mut kept = String::new();
        for (idx, line) in lines.iter().enumerate() {
            if csv && idx == 0 {
                kept.push_str(line);
                kept.push('\n');
                continue;
            }
            let record_gen = if csv {
                line.split(',').next().and_then(|g| g.parse::<u64>().ok())
            } else {
                serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("generation").and_then(|g| g.as_u64()))
            };
            let record_gen = record_gen.ok_or_else(|| RunError::CorruptLog {
                file: path.clone(),
                line: idx + 1,
                message: "record has no readable generation".into(),
            })?;
            if record_gen <= generation {
                kept.push_str(line);
                kept.push('\n');
            }
        }
        if kept != raw {
            self.write_atomic(name, &kept)?;
        }
        Ok(())
    }
}

/// Newline-terminated lines; an unterminated final line is a torn write.
pub fn complete_lines(raw: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = raw.split_inclusive('\n').collect();
    if lines.last().is_some_and(|l| !l.ends_with('\n')) {
        lines.pop();
    }
    lines.into_iter().map(|l| l.trim_end_matches('\n')).filter(|l| !l.is_empty()).collect()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, RunError> {
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&raw).map_err(|e| RunError::CorruptLog {
        file: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Parses a JSONL run log, ignoring a torn final line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    complete_lines(&raw)
        .into_iter()
        .enumerate()
        .map(|(idx, line)| {
            serde_json::from_str(line).map_err(|e| RunError::CorruptLog {
                file: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>, RunError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    let text: String = complete_lines(&raw).iter().map(|l| format!("{l}\n")).collect();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .enumerate()
        .map(|(idx, row)| {
            row.map_err(|e| RunError::CorruptLog { file: path.to_path_buf(), line: idx + 2, message: e.to_string() })
        })
        .collect()
}

pub fn trajectory_header() -> String {
    "generation,fitness,best_so_far,cumulative_cost_usd,route,guidance_gen\n".into()
}

pub fn trajectory_line(row: &TrajectoryRow) -> String {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    writer.serialize(row).expect("trajectory row serializes");
    String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("utf-8")
}

pub fn jsonl<T: Serialize>(record: &T) -> String {
    let mut line = serde_json::to_string(record).expect("record serializes");
    line.push('\n');
    line
}

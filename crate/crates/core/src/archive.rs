//! Dual-space archive: programs with their fitness, strategy descriptions,
//! strategy embeddings and optional behavior vectors, kept under a fixed
//! capacity and persisted as an append-only JSONL run log.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Tolerance on the unit norm of strategy embeddings.
pub const EMBEDDING_NORM_TOL: f64 = 1e-6;

pub type EntryId = u64;

/// How an entry came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProducedBy {
    Seed,
    StrategyPipeline,
    BaseFallback,
}

/// Per-instance success bits for instance-based tasks.
///
/// Serialized as a compact string of `0`/`1` characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BehaviorVector(pub Vec<bool>);

impl BehaviorVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// Fraction of set bits.
    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().filter(|b| **b).count() as f64 / self.0.len() as f64
    }
}

impl fmt::Display for BehaviorVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in &self.0 {
            f.write_str(if *bit { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for BehaviorVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BehaviorVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(serde::de::Error::custom(format!(
                    "behavior vector contains {other:?}, expected only '0' or '1'"
                ))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BehaviorVector)
    }
}

/// Provider usage attributable to producing one entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryCost {
    pub usd: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub embedding_tokens: u64,
}

/// One archived candidate. Field order is the canonical record order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveEntry {
    pub id: EntryId,
    pub parent_id: Option<EntryId>,
    pub generation: u64,
    pub produced_by: ProducedBy,
    pub fitness: f64,
    pub strategy_description: String,
    pub behavior_vector: Option<BehaviorVector>,
    pub cost: EntryCost,
    pub program_source: String,
    pub strategy_embedding: Vec<f64>,
}

impl ArchiveEntry {
    /// Canonical single-line JSON record.
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("archive entries always serialize")
    }
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive is empty")]
    Empty,
    #[error("capacity must be at least 2, got {0}")]
    InvalidCapacity(usize),
    #[error("entry id {0} is already present")]
    DuplicateId(EntryId),
    #[error("entry id {id} is not greater than the last inserted id {last}")]
    NonIncreasingId { id: EntryId, last: EntryId },
    #[error("entry {id} has non-finite fitness {fitness}")]
    NonFiniteFitness { id: EntryId, fitness: f64 },
    #[error("entry {id} has an empty strategy description")]
    EmptyDescription { id: EntryId },
    #[error("entry {id} embedding has dimension {got}, archive expects {expected}")]
    EmbeddingDimension { id: EntryId, expected: usize, got: usize },
    #[error("entry {id} embedding has L2 norm {norm}, expected 1 within {EMBEDDING_NORM_TOL}")]
    EmbeddingNorm { id: EntryId, norm: f64 },
    #[error("entry {id} behavior vector has length {got}, archive expects {expected}")]
    BehaviorLength { id: EntryId, expected: usize, got: usize },
    #[error("entry {0} not found")]
    NotFound(EntryId),
    #[error("run log I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("run log line {line} is malformed: {message}")]
    Malformed { line: usize, message: String },
    #[error("run log is truncated at line {line}; the first {salvageable} lines are intact")]
    Truncated { line: usize, salvageable: usize },
    #[error("run log line {line} was rejected during replay: {source}")]
    Replay {
        line: usize,
        #[source]
        source: Box<ArchiveError>,
    },
}

/// Capacity-bounded archive. Entries are kept in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    capacity: usize,
    entries: Vec<ArchiveEntry>,
    best_id: Option<EntryId>,
    last_id: Option<EntryId>,
    embedding_dim: Option<usize>,
    behavior_len: Option<usize>,
}

impl Archive {
    pub fn new(capacity: usize) -> Result<Self, ArchiveError> {
        if capacity < 2 {
            return Err(ArchiveError::InvalidCapacity(capacity));
        }
        Ok(Self {
            capacity,
            entries: Vec::new(),
            best_id: None,
            last_id: None,
            embedding_dim: None,
            behavior_len: None,
        })
    }

    /// Pins the embedding dimension instead of taking it from the first insert.
    pub fn with_embedding_dim(mut self, dim: usize) -> Self {
        self.embedding_dim = Some(dim);
        self
    }

    /// Pins the behavior-vector length |V| for instance-based tasks.
    pub fn with_behavior_len(mut self, len: usize) -> Self {
        self.behavior_len = Some(len);
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn best_id(&self) -> Option<EntryId> {
        self.best_id
    }

    pub fn last_id(&self) -> Option<EntryId> {
        self.last_id
    }

    pub fn get(&self, id: EntryId) -> Option<&ArchiveEntry> {
        self.entries
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|idx| &self.entries[idx])
    }

    pub fn contains(&self, id: EntryId) -> bool {
        self.get(id).is_some()
    }

    /// Live entry with maximal fitness, ties toward the smallest id.
    pub fn best(&self) -> Result<&ArchiveEntry, ArchiveError> {
        self.entries
            .iter()
            .reduce(|acc, e| if e.fitness > acc.fitness { e } else { acc })
            .ok_or(ArchiveError::Empty)
    }

    fn validate(&self, entry: &ArchiveEntry) -> Result<(), ArchiveError> {
        let id = entry.id;
        if self.contains(id) {
            return Err(ArchiveError::DuplicateId(id));
        }
        if let Some(last) = self.last_id {
            if id <= last {
                return Err(ArchiveError::NonIncreasingId { id, last });
            }
        }
        if !entry.fitness.is_finite() {
            return Err(ArchiveError::NonFiniteFitness { id, fitness: entry.fitness });
        }
        if entry.strategy_description.trim().is_empty() {
            return Err(ArchiveError::EmptyDescription { id });
        }
        let dim = entry.strategy_embedding.len();
        match self.embedding_dim {
            Some(expected) if expected != dim => {
                return Err(ArchiveError::EmbeddingDimension { id, expected, got: dim })
            }
            None if dim == 0 => {
                return Err(ArchiveError::EmbeddingDimension { id, expected: 1, got: 0 })
            }
            _ => {}
        }
        let norm = entry.strategy_embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm.is_nan() || (norm - 1.0).abs() > EMBEDDING_NORM_TOL {
            return Err(ArchiveError::EmbeddingNorm { id, norm });
        }
        if let (Some(expected), Some(b)) = (self.behavior_len, &entry.behavior_vector) {
            if b.len() != expected {
                return Err(ArchiveError::BehaviorLength { id, expected, got: b.len() });
            }
        }
        Ok(())
    }

    /// Inserts an entry, evicting at most one prior entry when over capacity.
    ///
    /// The evicted entry is the lowest-fitness live entry other than the best
    /// and the newcomer; ties go to the oldest id.
    pub fn insert(&mut self, entry: ArchiveEntry) -> Result<Option<ArchiveEntry>, ArchiveError> {
        self.validate(&entry)?;
        if self.embedding_dim.is_none() {
            self.embedding_dim = Some(entry.strategy_embedding.len());
        }
        if self.behavior_len.is_none() {
            self.behavior_len = entry.behavior_vector.as_ref().map(BehaviorVector::len);
        }

        let new_id = entry.id;
        let improves = match self.best_id.and_then(|b| self.get(b)) {
            Some(best) => entry.fitness > best.fitness,
            None => true,
        };
        self.entries.push(entry);
        self.last_id = Some(new_id);
        if improves {
            self.best_id = Some(new_id);
        }

        if self.entries.len() <= self.capacity {
            return Ok(None);
        }
        let victim = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.id != new_id && Some(e.id) != self.best_id)
            .min_by(|(_, a), (_, b)| a.fitness.total_cmp(&b.fitness).then(a.id.cmp(&b.id)))
            .map(|(idx, _)| idx)
            .expect("capacity >= 2 leaves an evictable entry");
        Ok(Some(self.entries.remove(victim)))
    }

    /// Canonical serialization of the live state; byte-stable across replays.
    pub fn canonical_json(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            capacity: usize,
            best_id: Option<EntryId>,
            entries: &'a [ArchiveEntry],
        }
        serde_json::to_string(&Canonical {
            capacity: self.capacity,
            best_id: self.best_id,
            entries: &self.entries,
        })
        .expect("archive serializes")
    }

    /// Hex SHA-256 of [`Archive::canonical_json`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Rebuilds an archive by replaying a run log through [`Archive::insert`].
    pub fn load_run(path: impl AsRef<Path>, capacity: usize) -> Result<Self, ArchiveError> {
        let mut archive = Archive::new(capacity)?;
        for (line, entry) in read_log(path)? {
            archive
                .insert(entry)
                .map_err(|e| ArchiveError::Replay { line, source: Box::new(e) })?;
        }
        Ok(archive)
    }
}

/// Appends one canonical record to the run log at `path`.
pub fn append_log(entry: &ArchiveEntry, path: impl AsRef<Path>) -> Result<(), ArchiveError> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", entry.to_record())?;
    out.flush()?;
    Ok(())
}

/// Reads every record of a run log, tagging each with its 1-based line number.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<(usize, ArchiveEntry)>, ArchiveError> {
    let mut raw = String::new();
    File::open(path)?.read_to_string(&mut raw)?;
    parse_log(&raw)
}

pub(crate) fn parse_log(raw: &str) -> Result<Vec<(usize, ArchiveEntry)>, ArchiveError> {
    let complete = raw.ends_with('\n') || raw.is_empty();
    let lines: Vec<&str> = raw.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (idx, text) in lines.iter().enumerate() {
        let line = idx + 1;
        if text.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ArchiveEntry>(text) {
            Ok(entry) => out.push((line, entry)),
            Err(_) if !complete && line == lines.len() => {
                return Err(ArchiveError::Truncated { line, salvageable: line - 1 })
            }
            Err(e) => return Err(ArchiveError::Malformed { line, message: e.to_string() }),
        }
    }
    Ok(out)
}

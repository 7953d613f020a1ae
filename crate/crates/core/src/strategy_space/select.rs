//! Complementarity scoring and inspiration selection.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ClusterState;
use crate::archive::{Archive, ArchiveEntry, BehaviorVector, EntryId};

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("behavior vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("behavior vectors are empty")]
    Empty,
}

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("parent {0} is not in the archive")]
    ParentMissing(EntryId),
    #[error("parent {0} has no cluster assignment")]
    ParentUnclustered(EntryId),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Normalized Hamming distance between two success vectors.
pub fn behavioral_score(a: &BehaviorVector, b: &BehaviorVector) -> Result<f64, ScoreError> {
    if a.len() != b.len() {
        return Err(ScoreError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(ScoreError::Empty);
    }
    let differing = a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count();
    Ok(differing as f64 / a.len() as f64)
}

/// Complementarity of `candidate` relative to `reference`.
///
/// Uses the behavioral distance when both sides carry behavior vectors and the
/// candidate's fitness otherwise.
pub fn score(candidate: &ArchiveEntry, reference: Option<&ArchiveEntry>) -> Result<f64, ScoreError> {
    match (&candidate.behavior_vector, reference.and_then(|r| r.behavior_vector.as_ref())) {
        (Some(b), Some(b_ref)) => behavioral_score(b, b_ref),
        _ => Ok(candidate.fitness),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Best,
    Diverse,
    Intra,
    Cross,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::Best => "current best",
            Role::Diverse => "most complementary to best",
            Role::Intra => "same strategy family",
            Role::Cross => "different strategy family",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Warmup,
    Clustered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pick {
    pub entry: ArchiveEntry,
    pub role: Role,
    /// The slot had no eligible candidate and was filled from the whole archive.
    pub padded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InspirationSet {
    pub parent: ArchiveEntry,
    pub picks: Vec<Pick>,
    pub mode: SelectionMode,
}

impl InspirationSet {
    pub fn ids(&self) -> Vec<EntryId> {
        std::iter::once(self.parent.id).chain(self.picks.iter().map(|p| p.entry.id)).collect()
    }
}

/// Highest-scoring candidate, ties toward the smallest id.
fn argmax<'a>(
    candidates: impl IntoIterator<Item = &'a ArchiveEntry>,
    reference: Option<&ArchiveEntry>,
) -> Result<Option<&'a ArchiveEntry>, ScoreError> {
    let mut best: Option<(&ArchiveEntry, f64)> = None;
    for c in candidates {
        let s = score(c, reference)?;
        best = match best {
            Some((b, bs)) if bs > s || (bs == s && b.id < c.id) => Some((b, bs)),
            _ => Some((c, s)),
        };
    }
    Ok(best.map(|(e, _)| e))
}

struct Slot<'a> {
    role: Role,
    entry: Option<&'a ArchiveEntry>,
}

/// Fills empty slots with the best-scoring unchosen entry, then builds the set.
fn finish<'a>(
    archive: &'a Archive,
    parent: &ArchiveEntry,
    reference: &ArchiveEntry,
    slots: Vec<Slot<'a>>,
    mode: SelectionMode,
) -> Result<InspirationSet, ScoreError> {
    let mut chosen: BTreeSet<EntryId> = slots.iter().filter_map(|s| s.entry.map(|e| e.id)).collect();
    chosen.insert(parent.id);
    let mut picks = Vec::new();
    for slot in slots {
        let (entry, padded) = match slot.entry {
            Some(e) => (e, false),
            None => {
                let pool = archive.entries().iter().filter(|e| !chosen.contains(&e.id));
                match argmax(pool, Some(reference))? {
                    Some(e) => (e, true),
                    None => continue,
                }
            }
        };
        chosen.insert(entry.id);
        picks.push(Pick { entry: entry.clone(), role: slot.role, padded });
    }
    Ok(InspirationSet { parent: parent.clone(), picks, mode })
}

/// Selects the inspiration set for one strategy-pipeline generation.
///
/// Warm-up (`generation < warmup` or no cluster state): the current best plus
/// the entry most complementary to it. Clustered: the most complementary
/// sibling in the parent's cluster plus the most complementary member of a
/// uniformly drawn other cluster, both scored against the parent. Picks never
/// include the parent; slots without an eligible candidate are padded from the
/// whole archive.
pub fn select_inspirations(
    archive: &Archive,
    parent_id: EntryId,
    generation: u64,
    warmup: u64,
    clusters: Option<&ClusterState>,
    rng: &mut impl Rng,
) -> Result<InspirationSet, SelectError> {
    let parent = archive.get(parent_id).ok_or(SelectError::ParentMissing(parent_id))?;

    let clusters = match clusters {
        Some(state) if generation >= warmup => state,
        _ => {
            let best = archive.best().map_err(|_| SelectError::ParentMissing(parent_id))?;
            let best_slot = (best.id != parent.id).then_some(best);
            let pool = archive.entries().iter().filter(|e| e.id != best.id && e.id != parent.id);
            let diverse = argmax(pool, Some(best))?;
            let slots = vec![
                Slot { role: Role::Best, entry: best_slot },
                Slot { role: Role::Diverse, entry: diverse },
            ];
            return Ok(finish(archive, parent, best, slots, SelectionMode::Warmup)?);
        }
    };

    let home = clusters.cluster_of(parent_id).ok_or(SelectError::ParentUnclustered(parent_id))?;
    let members = |c: usize| {
        clusters.members(c).into_iter().filter_map(|id| archive.get(id)).collect::<Vec<_>>()
    };
    let intra = argmax(members(home).into_iter().filter(|e| e.id != parent_id), Some(parent))?;

    let others: Vec<usize> =
        (0..clusters.effective_c).filter(|&c| c != home && !members(c).is_empty()).collect();
    let cross = if others.is_empty() {
        None
    } else {
        let drawn = others[rng.random_range(0..others.len())];
        argmax(members(drawn), Some(parent))?
    };

    let slots = vec![Slot { role: Role::Intra, entry: intra }, Slot { role: Role::Cross, entry: cross }];
    Ok(finish(archive, parent, parent, slots, SelectionMode::Clustered)?)
}

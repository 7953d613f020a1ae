//! Strategy-aware evolutionary program search.
//!
//! Every candidate program in the archive carries a persistent natural-language
//! strategy description and its embedding. Three layers sit on top of a minimal
//! evolutionary loop:
//!
//! - [`articulation`]: a single diagnose/direct/implement mutation prompt that
//!   yields a new program together with its strategy description.
//! - [`strategy_space`]: k-means over strategy embeddings and
//!   complementarity-driven inspiration retrieval.
//! - [`navigation`]: periodic landscape summaries (effective, saturated,
//!   underexplored, concrete guidance) that condition later mutations.
//!
//! The [`engine`] drives the loop, [`providers`] wraps chat and embedding
//! endpoints (with deterministic mocks), and [`tasks`] holds the verifiers and
//! the sandboxed candidate-execution bridge.

pub mod archive;
pub mod articulation;
pub mod engine;
pub mod navigation;
pub mod prompt;
pub mod providers;
pub mod strategy_space;
pub mod tasks;

pub use archive::{Archive, ArchiveEntry, ArchiveError, BehaviorVector, EntryCost, ProducedBy};
pub use engine::{RunConfig, RunError, RunResult};

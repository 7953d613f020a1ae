use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{Archive, ArchiveEntry};
use crate::articulation::SYSTEM_PROMPT;
use crate::prompt::{fences, render, section};
use crate::providers::{ChatExchange, ChatProvider, ChatRequest, ProviderError, Purpose};

pub const BASE_TEMPLATE: &str = include_str!("../../templates/base.txt");

pub const TOURNAMENT_SIZE: usize = 3;
pub const ELITIST_PROBABILITY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Base,
    Strategy,
    Skipped,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Base => "base",
            Route::Strategy => "strategy",
            Route::Skipped => "skipped",
        }
    }
}

/// Base iff the next uniform draw is below `epsilon`. Always consumes one draw.
pub fn epsilon_route(rng: &mut impl Rng, epsilon: f64) -> Route {
    if rng.random::<f64>() < epsilon {
        Route::Base
    } else {
        Route::Strategy
    }
}

/// Winner among the entries at `indices`: highest fitness, smallest id on ties.
pub fn tournament<'a>(archive: &'a Archive, indices: &[usize]) -> &'a ArchiveEntry {
    let entries = archive.entries();
    indices
        .iter()
        .map(|&i| &entries[i])
        .max_by(|a, b| a.fitness.total_cmp(&b.fitness).then(b.id.cmp(&a.id)))
        .expect("non-empty tournament")
}

/// Parent selection: the global best with probability 0.1, otherwise a
/// size-3 tournament drawn uniformly with replacement.
///
/// Draw order: one uniform for the elitist coin, then the tournament indices.
pub fn base_select<'a>(archive: &'a Archive, rng: &mut impl Rng) -> &'a ArchiveEntry {
    assert!(!archive.is_empty(), "base_select on an empty archive");
    if rng.random::<f64>() < ELITIST_PROBABILITY {
        return archive.best().expect("non-empty");
    }
    let n = archive.len();
    let indices: Vec<usize> = (0..TOURNAMENT_SIZE).map(|_| rng.random_range(0..n)).collect();
    tournament(archive, &indices)
}

pub fn build_base_prompt(parent: &ArchiveEntry, task_brief: &str) -> String {
    let fitness = parent.fitness.to_string();
    render(
        BASE_TEMPLATE,
        &[
            ("task_brief", task_brief.trim()),
            ("parent_fitness", &fitness),
            ("parent_program", parent.program_source.trim_end()),
        ],
    )
}

/// The program in a base-mutation reply: the first PROGRAM fence, else the
/// first fence of any tag. Empty bodies count as missing.
pub fn extract_program(text: &str) -> Option<String> {
    section(text, "PROGRAM")
        .or_else(|| fences(text).into_iter().next().map(|f| f.body.trim().to_string()))
        .filter(|p| !p.is_empty())
}

/// Plain mutation: up to `attempts` calls until a program can be extracted.
/// `Ok(None)` means every reply lacked a program.
pub fn base_mutate(
    parent: &ArchiveEntry,
    task_brief: &str,
    chat: &dyn ChatProvider,
    temperature: f64,
    max_tokens: u32,
    attempts: u32,
) -> Result<(Option<String>, Vec<ChatExchange>), ProviderError> {
    let request = ChatRequest {
        system: SYSTEM_PROMPT.trim().to_string(),
        user: build_base_prompt(parent, task_brief),
        temperature,
        max_tokens,
        purpose: Purpose::BaseMutate,
    };
    let mut exchanges = Vec::new();
    for _ in 0..attempts.max(1) {
        let exchange = chat.chat(&request)?;
        let program = extract_program(&exchange.response.text);
        exchanges.push(exchange);
        if program.is_some() {
            return Ok((program, exchanges));
        }
    }
    Ok((None, exchanges))
}

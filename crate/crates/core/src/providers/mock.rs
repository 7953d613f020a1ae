//! Deterministic offline providers.
//!
//! Prompts are routed by the fence markers our own templates embed in their
//! output-format instructions, so scenarios survive template wording changes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    l2_normalize, ChatExchange, ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider,
    EmbeddingResult, PriceTable, ProviderError, Purpose, UsageLedger, UsageRecord,
};
use crate::prompt::{fence, has_fence_marker, section};

pub const MOCK_CHAT_MODEL: &str = "mock-chat";
pub const MOCK_EMBED_MODEL: &str = "mock-embed";

/// Prompt classes the mock distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Articulate,
    Navigate,
    Describe,
    Base,
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptKind::Articulate => "articulate",
            PromptKind::Navigate => "navigate",
            PromptKind::Describe => "describe",
            PromptKind::Base => "base",
        })
    }
}

/// Classifies a user prompt by the output fences it asks for.
pub fn classify(prompt: &str) -> Option<PromptKind> {
    if has_fence_marker(prompt, "EFFECTIVE") {
        Some(PromptKind::Navigate)
    } else if has_fence_marker(prompt, "DIAGNOSIS") {
        Some(PromptKind::Articulate)
    } else if has_fence_marker(prompt, "DESCRIPTION") {
        Some(PromptKind::Describe)
    } else if has_fence_marker(prompt, "PROGRAM") {
        Some(PromptKind::Base)
    } else {
        None
    }
}

fn words(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

fn mock_exchange(
    request: &ChatRequest,
    reply: String,
    prices: &PriceTable,
    ledger: &UsageLedger,
) -> ChatExchange {
    let prompt_tokens = words(&request.system) + words(&request.user);
    let completion_tokens = words(&reply);
    let cost_usd = prices.cost(MOCK_CHAT_MODEL, prompt_tokens, completion_tokens);
    ledger.record(UsageRecord {
        purpose: request.purpose,
        model: MOCK_CHAT_MODEL.into(),
        ok: true,
        prompt_tokens,
        completion_tokens,
        cost_usd,
        retries: 0,
        latency_s: 0.0,
        prompt: Some(request.user.clone()),
        response: Some(reply.clone()),
    });
    ChatExchange {
        model: MOCK_CHAT_MODEL.into(),
        response: ChatResponse { text: reply, prompt_tokens, completion_tokens, latency_s: 0.0 },
        cost_usd,
        retries: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioStep {
    pub kind: PromptKind,
    pub reply: String,
}

/// Ordered replies, consumed per prompt kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub steps: Vec<ScenarioStep>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("scenario {}: {e}", path.display())))?;
        serde_json::from_str(&raw)
            .map_err(|e| ProviderError::Config(format!("scenario {}: {e}", path.display())))
    }

    pub fn push(&mut self, kind: PromptKind, reply: impl Into<String>) -> &mut Self {
        self.steps.push(ScenarioStep { kind, reply: reply.into() });
        self
    }
}

/// Replays a [`Scenario`]; each prompt kind has its own cursor.
pub struct ScriptedChat {
    queues: BTreeMap<PromptKind, Vec<String>>,
    cursors: Mutex<BTreeMap<PromptKind, usize>>,
    prices: PriceTable,
    ledger: UsageLedger,
}

impl ScriptedChat {
    pub fn new(scenario: Scenario, prices: PriceTable, ledger: UsageLedger) -> Self {
        let mut queues: BTreeMap<PromptKind, Vec<String>> = BTreeMap::new();
        for step in scenario.steps {
            queues.entry(step.kind).or_default().push(step.reply);
        }
        Self { queues, cursors: Mutex::new(BTreeMap::new()), prices, ledger }
    }

    /// Steps not yet consumed, per kind.
    pub fn remaining(&self) -> BTreeMap<PromptKind, usize> {
        let cursors = self.cursors.lock().expect("cursor lock");
        self.queues
            .iter()
            .map(|(k, q)| (*k, q.len() - cursors.get(k).copied().unwrap_or(0)))
            .collect()
    }
}

impl ChatProvider for ScriptedChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatExchange, ProviderError> {
        let kind = classify(&request.user)
            .ok_or_else(|| ProviderError::Unclassified(request.user.chars().take(80).collect()))?;
        let reply = {
            let mut cursors = self.cursors.lock().expect("cursor lock");
            let cursor = cursors.entry(kind).or_insert(0);
            let queue = self.queues.get(&kind).map(Vec::as_slice).unwrap_or(&[]);
            let reply = queue.get(*cursor).cloned().ok_or(ProviderError::ScenarioExhausted {
                kind,
                index: *cursor,
                total: queue.len(),
            })?;
            *cursor += 1;
            reply
        };
        Ok(mock_exchange(request, reply, &self.prices, &self.ledger))
    }

    fn replay(&self, answered: &[&str]) {
        let mut cursors = self.cursors.lock().expect("cursor lock");
        for kind in answered.iter().filter_map(|p| classify(p)) {
            *cursors.entry(kind).or_insert(0) += 1;
        }
    }
}

/// Offline chat that proposes "no change": mutations echo the parent program,
/// descriptions fingerprint the program, and landscape summaries are canned.
pub struct EchoChat {
    prices: PriceTable,
    ledger: UsageLedger,
}

impl EchoChat {
    pub fn new(prices: PriceTable, ledger: UsageLedger) -> Self {
        Self { prices, ledger }
    }

    fn reply(prompt: &str) -> Result<String, ProviderError> {
        let kind =
            classify(prompt).ok_or_else(|| ProviderError::Unclassified(prompt.chars().take(80).collect()))?;
        let parent = || section(prompt, "PARENT_PROGRAM").unwrap_or_default();
        Ok(match kind {
            PromptKind::Articulate => [
                fence("DIAGNOSIS", "No weakness identified under the echo mock."),
                fence("STRATEGY", "Keep the current construction unchanged."),
                fence("PROGRAM", &parent()),
            ]
            .join("\n"),
            PromptKind::Base => fence("PROGRAM", &parent()),
            PromptKind::Describe => {
                let program = section(prompt, "CANDIDATE_PROGRAM").unwrap_or_default();
                let digest = hex::encode(Sha256::digest(program.as_bytes()));
                fence(
                    "DESCRIPTION",
                    &format!(
                        "Direct construction spanning {} lines (fingerprint {}).",
                        program.lines().count(),
                        &digest[..8]
                    ),
                )
            }
            PromptKind::Navigate => [
                fence("EFFECTIVE", "- Direct explicit constructions."),
                fence("SATURATED", "- Unchanged resubmissions of the same construction."),
                fence("UNEXPLORED", "- Local refinement of positions after construction."),
                fence("GUIDANCE", "1. Perturb the best construction and re-verify."),
            ]
            .join("\n"),
        })
    }
}

impl ChatProvider for EchoChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatExchange, ProviderError> {
        let reply = Self::reply(&request.user)?;
        Ok(mock_exchange(request, reply, &self.prices, &self.ledger))
    }
}

/// Maps text to a unit vector by signed feature hashing of word uni- and bigrams.
///
/// Only determinism is promised; similar texts are not guaranteed to land
/// near each other.
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    prices: PriceTable,
    ledger: UsageLedger,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64, prices: PriceTable, ledger: UsageLedger) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed, prices, ledger }
    }

    fn add_feature(&self, v: &mut [f64], feature: &str) {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(feature.as_bytes());
        let h = hasher.finalize();
        let bucket = u64::from_le_bytes(h[..8].try_into().unwrap()) % self.dim as u64;
        v[bucket as usize] += if h[8] & 1 == 0 { 1.0 } else { -1.0 };
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let tokens: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect();
        let mut v = vec![0.0; self.dim];
        for t in &tokens {
            self.add_feature(&mut v, &format!("1:{t}"));
        }
        for pair in tokens.windows(2) {
            self.add_feature(&mut v, &format!("2:{} {}", pair[0], pair[1]));
        }
        if v.iter().all(|x| *x == 0.0) {
            self.add_feature(&mut v, &format!("raw:{text}"));
        }
        l2_normalize(v)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingResult, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let tokens = words(text);
        let cost_usd = self.prices.cost(MOCK_EMBED_MODEL, tokens, 0);
        self.ledger.record(UsageRecord {
            purpose: Purpose::Embed,
            model: MOCK_EMBED_MODEL.into(),
            ok: true,
            prompt_tokens: tokens,
            completion_tokens: 0,
            cost_usd,
            retries: 0,
            latency_s: 0.0,
            prompt: None,
            response: None,
        });
        Ok(EmbeddingResult { vector: self.vector(text), tokens, cost_usd })
    }

    fn dimension(&self) -> usize {
        self.dim
    }
}

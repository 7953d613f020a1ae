//! Chat-completion and embedding providers.
//!
//! Both the HTTP clients and the mocks record every exchange in a shared
//! [`UsageLedger`]; the engine drains it once per generation to build the
//! transcript and the cumulative-cost series.

mod mock;
mod openai;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{classify, EchoChat, HashEmbedder, PromptKind, Scenario, ScenarioStep, ScriptedChat};
pub use openai::{OpenAiChat, OpenAiEmbedder};

static NETWORK_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of HTTP requests issued by any provider in this process.
pub fn network_calls() -> u64 {
    NETWORK_CALLS.load(Ordering::SeqCst)
}

pub(crate) fn count_network_call() {
    NETWORK_CALLS.fetch_add(1, Ordering::SeqCst);
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider exhausted after {attempts} attempts (last status {last_status:?}): {message}")]
    Exhausted { attempts: u32, last_status: Option<u16>, message: String },
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Protocol(String),
    #[error("provider configuration error: {0}")]
    Config(String),
    #[error("mock scenario exhausted: no step at index {index} for {kind} prompts ({total} steps of that kind)")]
    ScenarioExhausted { kind: PromptKind, index: usize, total: usize },
    #[error("mock cannot classify prompt: {0}")]
    Unclassified(String),
    #[error("cannot embed empty text")]
    EmptyInput,
}

/// What a chat call is for; recorded in the transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Articulate,
    Navigate,
    BaseMutate,
    Describe,
    Embed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub purpose: Purpose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatExchange {
    pub model: String,
    pub response: ChatResponse,
    pub cost_usd: f64,
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingResult {
    pub vector: Vec<f64>,
    pub tokens: u64,
    pub cost_usd: f64,
}

pub trait ChatProvider: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatExchange, ProviderError>;

    /// Catches call-dependent state up with prompts answered by an earlier
    /// process, so a resumed run sees the same replies. Stateless providers
    /// ignore it.
    fn replay(&self, _answered: &[&str]) {}
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingResult, ProviderError>;
    fn dimension(&self) -> usize;
}

/// USD per million tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Price {
    #[serde(default)]
    pub input_per_mtok: f64,
    #[serde(default)]
    pub output_per_mtok: f64,
}

/// Per-model prices; models without an entry are free.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable(pub BTreeMap<String, Price>);

impl PriceTable {
    pub fn cost(&self, model: &str, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        let p = self.0.get(model).copied().unwrap_or_default();
        (prompt_tokens as f64 * p.input_per_mtok + completion_tokens as f64 * p.output_per_mtok) / 1e6
    }
}

/// One provider call as it appears in the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub purpose: Purpose,
    pub model: String,
    pub ok: bool,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_usd: f64,
    pub retries: u32,
    pub latency_s: f64,
    pub prompt: Option<String>,
    pub response: Option<String>,
}

/// Append-only, internally synchronized record of provider usage.
#[derive(Debug, Clone, Default)]
pub struct UsageLedger {
    records: Arc<Mutex<Vec<UsageRecord>>>,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, record: UsageRecord) {
        self.records.lock().expect("ledger lock").push(record);
    }

    /// Removes and returns everything recorded so far.
    pub fn drain(&self) -> Vec<UsageRecord> {
        std::mem::take(&mut *self.records.lock().expect("ledger lock"))
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("ledger lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Exponential backoff between attempts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub budget: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(16)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

fn default_mock_dim() -> usize {
    64
}

fn default_embedding_model() -> String {
    "text-embedding-3-small".into()
}

fn default_embedding_dim() -> usize {
    1536
}

fn default_temperature() -> f64 {
    0.8
}

fn default_max_tokens() -> u32 {
    8192
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_base_url() -> String {
    "https://api.openai.com/v1".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChatConfig {
    /// Scripted replay when `scenario` is set, echo mock otherwise.
    Mock {
        #[serde(default)]
        scenario: Option<PathBuf>,
    },
    Openai {
        #[serde(default = "default_base_url")]
        base_url: String,
        model: String,
        #[serde(default = "default_api_key_env")]
        api_key_env: String,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default = "default_max_tokens")]
        max_tokens: u32,
    },
}

impl Default for ChatConfig {
    fn default() -> Self {
        ChatConfig::Mock { scenario: None }
    }
}

impl ChatConfig {
    pub fn temperature(&self) -> f64 {
        match self {
            ChatConfig::Mock { .. } => 0.0,
            ChatConfig::Openai { temperature, .. } => *temperature,
        }
    }

    pub fn max_tokens(&self) -> u32 {
        match self {
            ChatConfig::Mock { .. } => default_max_tokens(),
            ChatConfig::Openai { max_tokens, .. } => *max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    /// Deterministic hashed n-gram embedding.
    Mock {
        #[serde(default = "default_mock_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    Openai {
        #[serde(default = "default_base_url")]
        base_url: String,
        #[serde(default = "default_embedding_model")]
        model: String,
        #[serde(default = "default_api_key_env")]
        api_key_env: String,
        #[serde(default = "default_embedding_dim")]
        dim: usize,
    },
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Mock { dim: default_mock_dim(), seed: 0 }
    }
}

impl EmbeddingConfig {
    pub fn dimension(&self) -> usize {
        match self {
            EmbeddingConfig::Mock { dim, .. } | EmbeddingConfig::Openai { dim, .. } => *dim,
        }
    }
}

fn default_retry_budget() -> u32 {
    3
}

fn default_timeout_s() -> f64 {
    120.0
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvidersConfig {
    #[serde(default)]
    pub chat: ChatConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub prices: PriceTable,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        Self {
            chat: ChatConfig::default(),
            embedding: EmbeddingConfig::default(),
            prices: PriceTable::default(),
            retry_budget: default_retry_budget(),
            timeout_s: default_timeout_s(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

impl ProvidersConfig {
    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            budget: self.retry_budget,
            base_delay: Duration::from_millis(self.backoff_ms),
            max_delay: Duration::from_secs(60),
        }
    }
}

/// Chat and embedding providers sharing one usage ledger.
#[derive(Clone)]
pub struct Providers {
    pub chat: Arc<dyn ChatProvider>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub ledger: UsageLedger,
}

impl Providers {
    pub fn from_config(config: &ProvidersConfig) -> Result<Self, ProviderError> {
        let ledger = UsageLedger::new();
        let chat: Arc<dyn ChatProvider> = match &config.chat {
            ChatConfig::Mock { scenario: Some(path) } => Arc::new(ScriptedChat::new(
                Scenario::load(path)?,
                config.prices.clone(),
                ledger.clone(),
            )),
            ChatConfig::Mock { scenario: None } => {
                Arc::new(EchoChat::new(config.prices.clone(), ledger.clone()))
            }
            ChatConfig::Openai { base_url, model, api_key_env, .. } => Arc::new(OpenAiChat::new(
                base_url,
                model,
                api_key_from_env(api_key_env),
                config.prices.clone(),
                config.retry_policy(),
                Duration::from_secs_f64(config.timeout_s),
                ledger.clone(),
            )),
        };
        let embedder: Arc<dyn EmbeddingProvider> = match &config.embedding {
            EmbeddingConfig::Mock { dim, seed } => {
                Arc::new(HashEmbedder::new(*dim, *seed, config.prices.clone(), ledger.clone()))
            }
            EmbeddingConfig::Openai { base_url, model, api_key_env, dim } => {
                Arc::new(OpenAiEmbedder::new(
                    base_url,
                    model,
                    *dim,
                    api_key_from_env(api_key_env),
                    config.prices.clone(),
                    config.retry_policy(),
                    Duration::from_secs_f64(config.timeout_s),
                    ledger.clone(),
                ))
            }
        };
        Ok(Self { chat, embedder, ledger })
    }
}

fn api_key_from_env(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|k| !k.is_empty())
}

/// Scales a vector to unit L2 norm; zero vectors are returned unchanged.
pub fn l2_normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    v
}

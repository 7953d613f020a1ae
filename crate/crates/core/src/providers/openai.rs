//! Blocking clients for OpenAI-compatible `/chat/completions` and `/embeddings`.

use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    count_network_call, l2_normalize, ChatExchange, ChatProvider, ChatRequest, ChatResponse,
    EmbeddingProvider, EmbeddingResult, PriceTable, ProviderError, Purpose, RetryPolicy,
    UsageLedger, UsageRecord,
};

#[derive(Debug, Default, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Debug, Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct ChatCompletion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
    #[serde(default)]
    usage: Option<Usage>,
}

struct Transport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    policy: RetryPolicy,
}

struct Delivered {
    body: String,
    retries: u32,
    latency_s: f64,
}

struct Failed {
    error: ProviderError,
    partial_usage: Option<Usage>,
}

fn retryable(status: u16) -> bool {
    status == 429 || status >= 500
}

impl Transport {
    fn new(base_url: &str, path: &str, api_key: Option<String>, policy: RetryPolicy, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self {
            agent: config.into(),
            url: format!("{}/{}", base_url.trim_end_matches('/'), path),
            api_key,
            policy,
        }
    }

    /// POSTs `body`, retrying transport errors, 429 and 5xx with backoff.
    fn post(&self, body: &Value) -> Result<Delivered, Failed> {
        let started = Instant::now();
        let mut last_status = None;
        let mut last_message = String::new();
        let mut partial_usage: Option<Usage> = None;
        for attempt in 0..=self.policy.budget {
            if attempt > 0 {
                std::thread::sleep(self.policy.delay(attempt - 1));
            }
            count_network_call();
            let mut request = self.agent.post(&self.url).header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
            match request.send_json(body) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    let text = response.body_mut().read_to_string().unwrap_or_default();
                    if (200..300).contains(&status) {
                        return Ok(Delivered {
                            body: text,
                            retries: attempt,
                            latency_s: started.elapsed().as_secs_f64(),
                        });
                    }
                    if let Some(usage) = serde_json::from_str::<Value>(&text)
                        .ok()
                        .and_then(|v| v.get("usage").cloned())
                        .and_then(|u| serde_json::from_value::<Usage>(u).ok())
                    {
                        partial_usage = Some(usage);
                    }
                    if !retryable(status) {
                        return Err(Failed {
                            error: ProviderError::Rejected { status, body: text },
                            partial_usage,
                        });
                    }
                    last_status = Some(status);
                    last_message = text;
                }
                Err(e) => {
                    last_status = None;
                    last_message = e.to_string();
                }
            }
        }
        Err(Failed {
            error: ProviderError::Exhausted {
                attempts: self.policy.budget + 1,
                last_status,
                message: last_message,
            },
            partial_usage,
        })
    }
}

pub struct OpenAiChat {
    transport: Transport,
    model: String,
    prices: PriceTable,
    ledger: UsageLedger,
}

impl OpenAiChat {
    pub fn new(
        base_url: &str,
        model: &str,
        api_key: Option<String>,
        prices: PriceTable,
        policy: RetryPolicy,
        timeout: Duration,
        ledger: UsageLedger,
    ) -> Self {
        Self {
            transport: Transport::new(base_url, "chat/completions", api_key, policy, timeout),
            model: model.to_string(),
            prices,
            ledger,
        }
    }

    fn record_failure(&self, request: &ChatRequest, usage: Option<Usage>) {
        let usage = usage.unwrap_or_default();
        self.ledger.record(UsageRecord {
            purpose: request.purpose,
            model: self.model.clone(),
            ok: false,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            cost_usd: self.prices.cost(&self.model, usage.prompt_tokens, usage.completion_tokens),
            retries: self.transport.policy.budget,
            latency_s: 0.0,
            prompt: Some(request.user.clone()),
            response: None,
        });
    }
}

impl ChatProvider for OpenAiChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatExchange, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let delivered = match self.transport.post(&body) {
            Ok(d) => d,
            Err(Failed { error, partial_usage }) => {
                self.record_failure(request, partial_usage);
                return Err(error);
            }
        };
        let parsed: ChatCompletion = serde_json::from_str(&delivered.body)
            .map_err(|e| ProviderError::Protocol(format!("chat completion body: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        let usage = parsed.usage.unwrap_or_default();
        let cost_usd = self.prices.cost(&self.model, usage.prompt_tokens, usage.completion_tokens);
        let exchange = ChatExchange {
            model: self.model.clone(),
            response: ChatResponse {
                text,
                prompt_tokens: usage.prompt_tokens,
                completion_tokens: usage.completion_tokens,
                latency_s: delivered.latency_s,
            },
            cost_usd,
            retries: delivered.retries,
        };
        self.ledger.record(UsageRecord {
            purpose: request.purpose,
            model: exchange.model.clone(),
            ok: true,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            cost_usd,
            retries: exchange.retries,
            latency_s: delivered.latency_s,
            prompt: Some(request.user.clone()),
            response: Some(exchange.response.text.clone()),
        });
        Ok(exchange)
    }
}

pub struct OpenAiEmbedder {
    transport: Transport,
    model: String,
    dim: usize,
    prices: PriceTable,
    ledger: UsageLedger,
}

impl OpenAiEmbedder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base_url: &str,
        model: &str,
        dim: usize,
        api_key: Option<String>,
        prices: PriceTable,
        policy: RetryPolicy,
        timeout: Duration,
        ledger: UsageLedger,
    ) -> Self {
        Self {
            transport: Transport::new(base_url, "embeddings", api_key, policy, timeout),
            model: model.to_string(),
            dim,
            prices,
            ledger,
        }
    }
}

impl EmbeddingProvider for OpenAiEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingResult, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let body = json!({ "model": self.model, "input": text });
        let delivered = self.transport.post(&body).map_err(|failed| {
            let usage = failed.partial_usage.unwrap_or_default();
            self.ledger.record(UsageRecord {
                purpose: Purpose::Embed,
                model: self.model.clone(),
                ok: false,
                prompt_tokens: usage.prompt_tokens,
                completion_tokens: 0,
                cost_usd: self.prices.cost(&self.model, usage.prompt_tokens, 0),
                retries: self.transport.policy.budget,
                latency_s: 0.0,
                prompt: None,
                response: None,
            });
            failed.error
        })?;
        let parsed: EmbeddingResponse = serde_json::from_str(&delivered.body)
            .map_err(|e| ProviderError::Protocol(format!("embedding body: {e}")))?;
        let vector = parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| ProviderError::Protocol("embedding response has no data".into()))?;
        if vector.len() != self.dim {
            return Err(ProviderError::Protocol(format!(
                "embedding has dimension {}, configured {}",
                vector.len(),
                self.dim
            )));
        }
        let tokens = parsed.usage.unwrap_or_default().prompt_tokens;
        let cost_usd = self.prices.cost(&self.model, tokens, 0);
        self.ledger.record(UsageRecord {
            purpose: Purpose::Embed,
            model: self.model.clone(),
            ok: true,
            prompt_tokens: tokens,
            completion_tokens: 0,
            cost_usd,
            retries: delivered.retries,
            latency_s: delivered.latency_s,
            prompt: None,
            response: None,
        });
        Ok(EmbeddingResult { vector: l2_normalize(vector), tokens, cost_usd })
    }

    fn dimension(&self) -> usize {
        self.dim
    }
}

//! Chat-completion gateway: provider registry, response cache, pricing,
//! retries, and the per-call ledger hook.
//!
//! The gateway is the only place model calls happen. Everything above it
//! (methods, committees) sees deterministic `ChatResponse`s whether the text
//! came from a live provider, a scripted mock, or the response cache.

pub mod mock;

use crate::ledger::{LedgerEntry, LedgerSink};
use crate::model::MethodName;
use crate::prompt::TemplateId;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no provider registered under id {0:?}")]
    UnknownProvider(String),
    #[error("no price configured for {provider_id}/{model_id}")]
    MissingPrice { provider_id: String, model_id: String },
    #[error("price for {0} has more than {MAX_PRICE_SCALE} fractional digits")]
    PriceScale(String),
    #[error("price {0:?} is not a valid non-negative decimal")]
    PriceParse(String),
    #[error("{provider_id} auth rejected: {detail}")]
    Auth { provider_id: String, detail: String },
    #[error("{provider_id} rate limited: {detail}")]
    RateLimited { provider_id: String, detail: String },
    #[error("{provider_id} transport failure: {detail}")]
    Transport { provider_id: String, detail: String },
    #[error("{provider_id} returned a malformed response: {detail}")]
    Protocol { provider_id: String, detail: String },
    #[error("mock script has no rule for agent {agent_id} instance {instance_id} round {round} sample {sample_index} and no default reply")]
    ScriptMiss {
        agent_id: String,
        instance_id: String,
        round: u32,
        sample_index: u32,
    },
    #[error("response store failed: {0}")]
    Store(String),
    #[error("ledger append failed: {0}")]
    Ledger(String),
}

impl ProviderError {
    /// Transient failures worth retrying with backoff.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ProviderError::RateLimited { .. } | ProviderError::Transport { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
}

/// A fully-specified chat completion request. `sample_index` distinguishes
/// repeated sampling of the same prompt (self-consistency) so each sample
/// gets its own cache slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub provider_id: String,
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub sample_index: u32,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    fn validate(&self) -> Result<(), ProviderError> {
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidRequest("no messages".into()));
        }
        match self.messages[0].role {
            Role::System | Role::User => {}
            Role::Assistant => {
                return Err(ProviderError::InvalidRequest(
                    "first message must be system or user".into(),
                ))
            }
        }
        if !(self.temperature >= 0.0) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} out of range",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(ProviderError::InvalidRequest("max_output_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// Token counts as reported by the provider (whitespace tokens for the mock).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self { input_tokens, output_tokens }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

/// What a provider backend returns for one call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderReply {
    pub text: String,
    pub usage: TokenUsage,
}

/// Gateway result: reply plus cache provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
    pub provider_id: String,
    pub model_id: String,
    pub cached: bool,
}

/// Call provenance threaded through the gateway for scripting and ledger rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallContext {
    pub run_id: String,
    pub instance_id: String,
    pub agent_id: String,
    pub method: MethodName,
    pub round: u32,
    pub template: TemplateId,
}

/// A chat-completion backend (live HTTP adapter or scripted mock).
pub trait ChatProvider: Send + Sync {
    fn complete(&self, req: &ChatRequest, ctx: &CallContext) -> Result<ProviderReply, ProviderError>;
}

/// Cached response body, addressed by [`cache_key`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredResponse {
    pub text: String,
    pub usage: TokenUsage,
    pub provider_id: String,
    pub model_id: String,
}

/// Content-addressed response cache.
pub trait ResponseStore: Send + Sync {
    fn get(&self, key: &str) -> Result<Option<StoredResponse>, ProviderError>;
    fn put(&self, key: &str, value: &StoredResponse) -> Result<(), ProviderError>;
}

/// In-memory store for tests and the browser demo.
#[derive(Default)]
pub struct MemoryStore {
    entries: Mutex<BTreeMap<String, StoredResponse>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ResponseStore for MemoryStore {
    fn get(&self, key: &str) -> Result<Option<StoredResponse>, ProviderError> {
        Ok(self.entries.lock().unwrap().get(key).cloned())
    }

    fn put(&self, key: &str, value: &StoredResponse) -> Result<(), ProviderError> {
        self.entries.lock().unwrap().insert(key.to_string(), value.clone());
        Ok(())
    }
}

/// Cache key: SHA-256 over the canonical JSON of everything that determines a
/// response (provider, model, messages, temperature, sample index, token cap).
pub fn cache_key(req: &ChatRequest) -> String {
    let canonical = serde_json::to_vec(req).expect("request serializes");
    let mut hasher = Sha256::new();
    hasher.update(&canonical);
    hex::encode(hasher.finalize())
}

/// Maximum fractional digits a configured price may carry. Keeping prices at
/// or below this scale makes per-call cost arithmetic exact in `Decimal`.
pub const MAX_PRICE_SCALE: u32 = 12;

/// USD per million tokens, split by direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelPrice {
    pub input_per_million: Decimal,
    pub output_per_million: Decimal,
}

/// One pricing config row; prices are decimal strings to keep them exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PricingRow {
    pub provider: String,
    pub model: String,
    pub input_per_million: String,
    pub output_per_million: String,
}

/// Price lookup for every (provider, model) pair a run may touch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PricingTable {
    entries: BTreeMap<(String, String), ModelPrice>,
}

fn parse_price(s: &str) -> Result<Decimal, ProviderError> {
    let d: Decimal = s
        .trim()
        .parse()
        .map_err(|_| ProviderError::PriceParse(s.to_string()))?;
    if d.is_sign_negative() {
        return Err(ProviderError::PriceParse(s.to_string()));
    }
    if d.scale() > MAX_PRICE_SCALE {
        return Err(ProviderError::PriceScale(s.to_string()));
    }
    Ok(d)
}

impl PricingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        provider_id: impl Into<String>,
        model_id: impl Into<String>,
        input_per_million: Decimal,
        output_per_million: Decimal,
    ) -> Result<(), ProviderError> {
        for (name, d) in [("input", input_per_million), ("output", output_per_million)] {
            if d.is_sign_negative() {
                return Err(ProviderError::PriceParse(format!("{name} {d}")));
            }
            if d.scale() > MAX_PRICE_SCALE {
                return Err(ProviderError::PriceScale(d.to_string()));
            }
        }
        self.entries.insert(
            (provider_id.into(), model_id.into()),
            ModelPrice { input_per_million, output_per_million },
        );
        Ok(())
    }

    pub fn from_rows(rows: &[PricingRow]) -> Result<Self, ProviderError> {
        let mut table = Self::new();
        for row in rows {
            table.insert(
                row.provider.clone(),
                row.model.clone(),
                parse_price(&row.input_per_million)?,
                parse_price(&row.output_per_million)?,
            )?;
        }
        Ok(table)
    }

    /// Parse `{"models": [{provider, model, input_per_million, output_per_million}]}`.
    pub fn from_json_str(s: &str) -> Result<Self, ProviderError> {
        #[derive(Deserialize)]
        struct File {
            models: Vec<PricingRow>,
        }
        let file: File = serde_json::from_str(s)
            .map_err(|e| ProviderError::PriceParse(e.to_string()))?;
        Self::from_rows(&file.models)
    }

    pub fn get(&self, provider_id: &str, model_id: &str) -> Result<ModelPrice, ProviderError> {
        self.entries
            .get(&(provider_id.to_string(), model_id.to_string()))
            .copied()
            .ok_or_else(|| ProviderError::MissingPrice {
                provider_id: provider_id.to_string(),
                model_id: model_id.to_string(),
            })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

const MILLION: Decimal = Decimal::from_parts(1_000_000, 0, 0, false, 0);

/// Exact USD cost of `usage` at `price`. Token counts are integers and price
/// scale is capped, so this never rounds.
pub fn cost_of(usage: TokenUsage, price: ModelPrice) -> Decimal {
    let input = Decimal::from(usage.input_tokens) * price.input_per_million / MILLION;
    let output = Decimal::from(usage.output_tokens) * price.output_per_million / MILLION;
    input + output
}

/// Exponential backoff schedule for retryable failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay_ms: 250 }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

type SleepFn = fn(Duration);
type ClockFn = fn() -> u64;

fn native_sleep(d: Duration) {
    std::thread::sleep(d);
}

fn native_now_ms() -> u64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Routes requests to providers, consults the cache first, retries transient
/// failures, and appends one ledger entry per answered request.
pub struct Gateway {
    providers: BTreeMap<String, Arc<dyn ChatProvider>>,
    store: Option<Arc<dyn ResponseStore>>,
    ledger: Option<Arc<dyn LedgerSink>>,
    pricing: PricingTable,
    retry: RetryPolicy,
    sleep: SleepFn,
    clock: ClockFn,
    live_calls: AtomicU64,
}

pub struct GatewayBuilder {
    gateway: Gateway,
}

impl GatewayBuilder {
    pub fn provider(mut self, id: impl Into<String>, provider: Arc<dyn ChatProvider>) -> Self {
        self.gateway.providers.insert(id.into(), provider);
        self
    }

    pub fn store(mut self, store: Arc<dyn ResponseStore>) -> Self {
        self.gateway.store = Some(store);
        self
    }

    pub fn ledger(mut self, sink: Arc<dyn LedgerSink>) -> Self {
        self.gateway.ledger = Some(sink);
        self
    }

    pub fn pricing(mut self, pricing: PricingTable) -> Self {
        self.gateway.pricing = pricing;
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.gateway.retry = retry;
        self
    }

    /// Replace the backoff sleep (tests and wasm builds pass a no-op).
    pub fn sleep_with(mut self, sleep: SleepFn) -> Self {
        self.gateway.sleep = sleep;
        self
    }

    /// Replace the wall clock used for ledger timestamps.
    pub fn clock(mut self, clock: ClockFn) -> Self {
        self.gateway.clock = clock;
        self
    }

    pub fn build(self) -> Gateway {
        self.gateway
    }
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder {
            gateway: Gateway {
                providers: BTreeMap::new(),
                store: None,
                ledger: None,
                pricing: PricingTable::new(),
                retry: RetryPolicy::default(),
                sleep: native_sleep,
                clock: native_now_ms,
                live_calls: AtomicU64::new(0),
            },
        }
    }

    /// Number of calls that actually reached a provider backend (cache hits
    /// excluded, each retry attempt counted).
    pub fn live_calls(&self) -> u64 {
        self.live_calls.load(Ordering::SeqCst)
    }

    pub fn pricing(&self) -> &PricingTable {
        &self.pricing
    }

    /// Answer a request from the cache or a provider backend.
    ///
    /// Pricing must cover the request's (provider, model) pair even on cache
    /// hits: cached entries still ledger a nominal cost. Retries apply only to
    /// transient failures; auth and protocol errors propagate immediately.
    pub fn complete(&self, req: &ChatRequest, ctx: &CallContext) -> Result<ChatResponse, ProviderError> {
        req.validate()?;
        let price = self.pricing.get(&req.provider_id, &req.model_id)?;

        let key = cache_key(req);
        if let Some(store) = &self.store {
            if let Some(hit) = store.get(&key)? {
                let nominal = cost_of(hit.usage, price);
                self.append_ledger(req, ctx, hit.usage, Decimal::ZERO, nominal, true, 0)?;
                return Ok(ChatResponse {
                    text: hit.text,
                    usage: hit.usage,
                    provider_id: req.provider_id.clone(),
                    model_id: req.model_id.clone(),
                    cached: true,
                });
            }
        }

        let provider = self
            .providers
            .get(&req.provider_id)
            .ok_or_else(|| ProviderError::UnknownProvider(req.provider_id.clone()))?;

        let mut retries = 0u32;
        let reply = loop {
            self.live_calls.fetch_add(1, Ordering::SeqCst);
            match provider.complete(req, ctx) {
                Ok(reply) => break reply,
                Err(err) if err.is_retryable() && retries < self.retry.max_retries => {
                    (self.sleep)(self.retry.delay(retries));
                    retries += 1;
                }
                Err(err) => return Err(err),
            }
        };

        if let Some(store) = &self.store {
            store.put(
                &key,
                &StoredResponse {
                    text: reply.text.clone(),
                    usage: reply.usage,
                    provider_id: req.provider_id.clone(),
                    model_id: req.model_id.clone(),
                },
            )?;
        }
        let cost = cost_of(reply.usage, price);
        self.append_ledger(req, ctx, reply.usage, cost, cost, false, retries)?;
        Ok(ChatResponse {
            text: reply.text,
            usage: reply.usage,
            provider_id: req.provider_id.clone(),
            model_id: req.model_id.clone(),
            cached: false,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn append_ledger(
        &self,
        req: &ChatRequest,
        ctx: &CallContext,
        usage: TokenUsage,
        cost_usd: Decimal,
        nominal_cost_usd: Decimal,
        cached: bool,
        retries: u32,
    ) -> Result<(), ProviderError> {
        let Some(ledger) = &self.ledger else {
            return Ok(());
        };
        let entry = LedgerEntry {
            run_id: ctx.run_id.clone(),
            instance_id: ctx.instance_id.clone(),
            agent_id: ctx.agent_id.clone(),
            method: ctx.method,
            round: ctx.round,
            sample_index: req.sample_index,
            provider_id: req.provider_id.clone(),
            model_id: req.model_id.clone(),
            usage,
            cost_usd,
            nominal_cost_usd,
            cached,
            retries,
            timestamp_ms: (self.clock)(),
        };
        ledger
            .append(&entry)
            .map_err(|e| ProviderError::Ledger(e.to_string()))
    }
}

/// Whitespace token count used by the mock provider and tests.
pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Usage for a mock call: input counts every message, output counts the reply.
pub fn mock_usage(messages: &[ChatMessage], reply: &str) -> TokenUsage {
    let input = messages.iter().map(|m| whitespace_tokens(&m.content)).sum();
    TokenUsage::new(input, whitespace_tokens(reply))
}

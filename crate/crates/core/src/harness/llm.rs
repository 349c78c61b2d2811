use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, OnceLock};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl Message {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>, tool_calls: Vec<ToolCall>) -> Self {
        Self { tool_calls, ..Self::plain(Role::Assistant, content) }
    }

    pub fn tool(call_id: &str, content: impl Into<String>) -> Self {
        Self { tool_call_id: Some(call_id.to_string()), ..Self::plain(Role::Tool, content) }
    }
}

/// A tool offered to the model; `parameters` is a JSON schema object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Which pipeline stage is asking, e.g. `cpc_agent` or `generation`.
    pub caller: String,
    pub messages: Vec<Message>,
    pub tools: Vec<ToolSpec>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(caller: &str, messages: Vec<Message>, temperature: f64) -> Self {
        Self { caller: caller.to_string(), messages, tools: Vec::new(), temperature }
    }

    pub fn with_tools(mut self, tools: Vec<ToolSpec>) -> Self {
        self.tools = tools;
        self
    }

    /// SHA-256 over the serialized message list.
    pub fn messages_digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.messages).expect("messages serialize");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub model: String,
    pub content: String,
    pub tool_calls: Vec<ToolCall>,
    pub usage: Usage,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    #[error("replay script exhausted at step {step} (stage '{caller}')")]
    ScriptExhausted { caller: String, step: usize },
    #[error("replay desync at step {step}: script expects '{expected}', stage '{actual}' asked")]
    ReplayDesync { step: usize, expected: String, actual: String },
    #[error("model backend error: {0}")]
    Backend(String),
}

/// Chat completion with tool calling.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

/// Per-model token prices in dollars per million tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPrice {
    pub input_per_mtok: Decimal,
    pub output_per_mtok: Decimal,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable(pub BTreeMap<String, ModelPrice>);

impl PriceTable {
    pub fn cost(&self, model: &str, usage: Usage) -> Decimal {
        let Some(price) = self.0.get(model) else {
            static WARNED: OnceLock<Mutex<BTreeSet<String>>> = OnceLock::new();
            let mut warned = WARNED.get_or_init(Mutex::default).lock().expect("warned set poisoned");
            if usage.input_tokens + usage.output_tokens > 0 && warned.insert(model.to_string()) {
                log::warn!("no price configured for model '{model}'; counting its calls as free");
            }
            return Decimal::ZERO;
        };
        let million = Decimal::from(1_000_000u64);
        (Decimal::from(usage.input_tokens) * price.input_per_mtok
            + Decimal::from(usage.output_tokens) * price.output_per_mtok)
            / million
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Chat,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCost {
    pub kind: CallKind,
    pub caller: String,
    pub model: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub dollars: Decimal,
}

/// Every priced call of one instance, with totals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRecord {
    pub calls: Vec<CallCost>,
    pub chat_dollars: Decimal,
    pub embedding_dollars: Decimal,
    pub total_dollars: Decimal,
}

impl CostRecord {
    pub fn from_calls(calls: Vec<CallCost>) -> Self {
        let sum = |k: CallKind| calls.iter().filter(|c| c.kind == k).map(|c| c.dollars).sum::<Decimal>();
        let chat_dollars = sum(CallKind::Chat);
        let embedding_dollars = sum(CallKind::Embedding);
        Self { total_dollars: chat_dollars + embedding_dollars, chat_dollars, embedding_dollars, calls }
    }
}

/// Shared sink for priced calls.
#[derive(Debug, Clone, Default)]
pub struct CostMeter {
    prices: Arc<PriceTable>,
    calls: Arc<Mutex<Vec<CallCost>>>,
}

impl CostMeter {
    pub fn new(prices: PriceTable) -> Self {
        Self { prices: Arc::new(prices), calls: Arc::default() }
    }

    pub fn record(&self, kind: CallKind, caller: &str, model: &str, usage: Usage) {
        let dollars = self.prices.cost(model, usage);
        self.calls.lock().expect("cost meter poisoned").push(CallCost {
            kind,
            caller: caller.to_string(),
            model: model.to_string(),
            input_tokens: usage.input_tokens,
            output_tokens: usage.output_tokens,
            dollars,
        });
    }

    pub fn record_snapshot(&self) -> CostRecord {
        CostRecord::from_calls(self.calls.lock().expect("cost meter poisoned").clone())
    }
}

/// Wraps a backend and records the cost of every completed call.
pub struct MeteredLlm {
    inner: Arc<dyn LlmBackend>,
    meter: CostMeter,
}

impl MeteredLlm {
    pub fn new(inner: Arc<dyn LlmBackend>, meter: CostMeter) -> Self {
        Self { inner, meter }
    }
}

impl LlmBackend for MeteredLlm {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let response = self.inner.complete(request)?;
        self.meter.record(CallKind::Chat, &request.caller, &response.model, response.usage);
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    #[test]
    fn prices_are_exact() {
        let mut table = BTreeMap::new();
        table.insert(
            "m".to_string(),
            ModelPrice { input_per_mtok: Decimal::from_str("0.28").unwrap(), output_per_mtok: Decimal::from_str("0.42").unwrap() },
        );
        let prices = PriceTable(table);
        let usage = Usage { input_tokens: 100_000, output_tokens: 10_000 };
        assert_eq!(prices.cost("m", usage), Decimal::from_str("0.0322").unwrap());
        assert_eq!(prices.cost("unknown", usage), Decimal::ZERO);
        let meter = CostMeter::new(prices);
        meter.record(CallKind::Chat, "a", "m", usage);
        meter.record(CallKind::Embedding, "b", "m", Usage { input_tokens: 1_000_000, output_tokens: 0 });
        let record = meter.record_snapshot();
        assert_eq!(record.embedding_dollars, Decimal::from_str("0.28").unwrap());
        assert_eq!(record.total_dollars, record.calls.iter().map(|c| c.dollars).sum::<Decimal>());
    }
}

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::embed::{EmbedError, Embedder};
use super::llm::{CallKind, ChatRequest, ChatResponse, CostMeter, LlmBackend, LlmError, Message, Role, ToolCall, Usage};

/// An OpenAI-compatible chat-completions endpoint. The API key is read from
/// the environment variable named by `api_key_env`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveConfig {
    #[serde(default = "default_base_url")]
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_base_url() -> String {
    "https://api.openai.com/v1".to_string()
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

fn default_timeout() -> u64 {
    300
}

fn default_retries() -> u32 {
    3
}

impl LiveConfig {
    pub fn new(model: &str) -> Self {
        Self {
            base_url: default_base_url(),
            model: model.to_string(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
        }
    }
}

struct Http {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
    max_retries: u32,
}

impl Http {
    fn new(config: &LiveConfig) -> Result<Self, String> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| format!("environment variable {} is not set", config.api_key_env))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self { client, base_url: config.base_url.trim_end_matches('/').to_string(), api_key, max_retries: config.max_retries })
    }

    /// POST with exponential backoff on transport errors, 429 and 5xx.
    fn post(&self, path: &str, body: &Value) -> Result<Value, String> {
        let url = format!("{}/{path}", self.base_url);
        let mut attempt = 0;
        loop {
            let result = self.client.post(&url).bearer_auth(&self.api_key).json(body).send();
            let retryable = match result {
                Ok(resp) if resp.status().is_success() => return resp.json::<Value>().map_err(|e| e.to_string()),
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if !(status.as_u16() == 429 || status.is_server_error()) {
                        return Err(format!("HTTP {status}: {text}"));
                    }
                    format!("HTTP {status}: {text}")
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.max_retries {
                return Err(format!("giving up after {} attempt(s): {retryable}", attempt + 1));
            }
            log::warn!("request to {url} failed ({retryable}); retrying");
            std::thread::sleep(Duration::from_secs(1 << attempt));
            attempt += 1;
        }
    }
}

pub struct LiveBackend {
    http: Http,
    model: String,
}

impl LiveBackend {
    pub fn new(config: &LiveConfig) -> Result<Self, LlmError> {
        Ok(Self { http: Http::new(config).map_err(LlmError::Backend)?, model: config.model.clone() })
    }
}

fn wire_message(m: &Message) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut v = json!({ "role": role, "content": m.content });
    if !m.tool_calls.is_empty() {
        v["tool_calls"] = m
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": { "name": c.name, "arguments": c.arguments.to_string() }
                })
            })
            .collect();
    }
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = json!(id);
    }
    v
}

fn parse_completion(body: &Value, fallback_model: &str) -> Result<ChatResponse, LlmError> {
    let message = &body["choices"][0]["message"];
    if message.is_null() {
        return Err(LlmError::Backend(format!("response has no choices: {body}")));
    }
    let tool_calls = message["tool_calls"]
        .as_array()
        .map(|calls| {
            calls
                .iter()
                .map(|c| {
                    let raw = c["function"]["arguments"].as_str().unwrap_or("{}");
                    ToolCall {
                        id: c["id"].as_str().unwrap_or_default().to_string(),
                        name: c["function"]["name"].as_str().unwrap_or_default().to_string(),
                        arguments: serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())),
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(ChatResponse {
        model: body["model"].as_str().unwrap_or(fallback_model).to_string(),
        content: message["content"].as_str().unwrap_or_default().to_string(),
        tool_calls,
        usage: Usage {
            input_tokens: body["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            output_tokens: body["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        },
    })
}

impl LlmBackend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut body = json!({
            "model": self.model,
            "messages": request.messages.iter().map(wire_message).collect::<Vec<_>>(),
            "temperature": request.temperature,
        });
        if !request.tools.is_empty() {
            body["tools"] = request
                .tools
                .iter()
                .map(|t| json!({ "type": "function", "function": { "name": t.name, "description": t.description, "parameters": t.parameters } }))
                .collect();
        }
        let resp = self.http.post("chat/completions", &body).map_err(LlmError::Backend)?;
        // The served model name is what the price table is keyed by.
        let mut parsed = parse_completion(&resp, &self.model)?;
        parsed.model = self.model.clone();
        Ok(parsed)
    }
}

/// An OpenAI-compatible embeddings endpoint.
pub struct RemoteEmbedder {
    http: Http,
    model: String,
    meter: Option<CostMeter>,
    batch: usize,
}

impl RemoteEmbedder {
    pub fn new(config: &LiveConfig, meter: Option<CostMeter>) -> Result<Self, EmbedError> {
        Ok(Self { http: Http::new(config).map_err(EmbedError)?, model: config.model.clone(), meter, batch: 64 })
    }
}

impl Embedder for RemoteEmbedder {
    fn name(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch) {
            let resp = self.http.post("embeddings", &json!({ "model": self.model, "input": batch })).map_err(EmbedError)?;
            let data = resp["data"].as_array().ok_or_else(|| EmbedError(format!("no data in response: {resp}")))?;
            let mut vectors: Vec<(usize, Vec<f64>)> = data
                .iter()
                .map(|d| {
                    let index = d["index"].as_u64().unwrap_or(0) as usize;
                    let v = d["embedding"].as_array().map(|a| a.iter().filter_map(Value::as_f64).collect()).unwrap_or_default();
                    (index, v)
                })
                .collect();
            if vectors.len() != batch.len() {
                return Err(EmbedError(format!("expected {} embeddings, got {}", batch.len(), vectors.len())));
            }
            vectors.sort_by_key(|(i, _)| *i);
            out.extend(vectors.into_iter().map(|(_, v)| v));
            if let Some(meter) = &self.meter {
                let usage = Usage { input_tokens: resp["usage"]["prompt_tokens"].as_u64().unwrap_or(0), output_tokens: 0 };
                meter.record(CallKind::Embedding, "retrieval", &self.model, usage);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tool_calls_and_usage() {
        let body = json!({
            "model": "served",
            "choices": [{ "message": {
                "content": null,
                "tool_calls": [{ "id": "c1", "type": "function", "function": { "name": "read_code", "arguments": "{\"file\":\"a.c\",\"center\":3}" } }]
            }}],
            "usage": { "prompt_tokens": 12, "completion_tokens": 3 }
        });
        let r = parse_completion(&body, "m").unwrap();
        assert_eq!(r.content, "");
        assert_eq!(r.tool_calls[0].arguments["center"], 3);
        assert_eq!(r.usage, Usage { input_tokens: 12, output_tokens: 3 });
        let wire = wire_message(&Message::assistant("", r.tool_calls.clone()));
        assert_eq!(wire["tool_calls"][0]["function"]["arguments"], "{\"center\":3,\"file\":\"a.c\"}");
    }
}

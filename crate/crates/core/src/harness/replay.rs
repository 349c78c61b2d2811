use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::llm::{ChatRequest, ChatResponse, LlmBackend, LlmError, ToolCall, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayToolCall {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub name: String,
    #[serde(default)]
    pub arguments: Value,
}

/// One scripted model turn, consumed by the stage named in `caller`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub caller: String,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ReplayToolCall>,
    #[serde(default)]
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayScript {
    #[serde(default = "default_model")]
    pub model: String,
    pub entries: Vec<ReplayEntry>,
}

fn default_model() -> String {
    "replay".to_string()
}

impl ReplayScript {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Backend(format!("cannot read replay script {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| LlmError::Backend(format!("malformed replay script {}: {e}", path.display())))
    }
}

/// What the replay backend saw for each request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub step: usize,
    pub caller: String,
    pub temperature: f64,
    pub messages_digest: String,
    pub tools: Vec<String>,
}

/// Answers requests with pre-authored responses, strictly in script order.
pub struct ReplayBackend {
    script: ReplayScript,
    cursor: Mutex<usize>,
    log: Mutex<Vec<RequestRecord>>,
}

impl ReplayBackend {
    pub fn new(script: ReplayScript) -> Self {
        Self { script, cursor: Mutex::new(0), log: Mutex::new(Vec::new()) }
    }

    pub fn from_path(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(ReplayScript::load(path)?))
    }

    pub fn requests(&self) -> Vec<RequestRecord> {
        self.log.lock().expect("replay log poisoned").clone()
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().expect("replay cursor poisoned")
    }

    pub fn remaining(&self) -> usize {
        self.script.entries.len() - self.consumed()
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut cursor = self.cursor.lock().expect("replay cursor poisoned");
        let step = *cursor;
        self.log.lock().expect("replay log poisoned").push(RequestRecord {
            step,
            caller: request.caller.clone(),
            temperature: request.temperature,
            messages_digest: request.messages_digest(),
            tools: request.tools.iter().map(|t| t.name.clone()).collect(),
        });
        let Some(entry) = self.script.entries.get(step) else {
            return Err(LlmError::ScriptExhausted { caller: request.caller.clone(), step });
        };
        if entry.caller != request.caller {
            return Err(LlmError::ReplayDesync { step, expected: entry.caller.clone(), actual: request.caller.clone() });
        }
        *cursor += 1;
        let tool_calls = entry
            .tool_calls
            .iter()
            .enumerate()
            .map(|(i, c)| ToolCall {
                id: c.id.clone().unwrap_or_else(|| format!("call_{step}_{i}")),
                name: c.name.clone(),
                arguments: c.arguments.clone(),
            })
            .collect();
        Ok(ChatResponse {
            model: self.script.model.clone(),
            content: entry.content.clone(),
            tool_calls,
            usage: entry.usage,
        })
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::toolbox::Toolbox;
use super::{AgentError, AgentSpec, ToolName};
use crate::harness::llm::{ChatRequest, LlmBackend, Message, ToolCall};

const FINALIZE_NOW: &str = "You have used all available steps. Do not call any more tools. \
Write the final report now, following the output format exactly.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// The model finished on its own.
    Completed,
    /// The model finished after the step budget ran out and it was told to.
    ForcedFinal,
    /// The model never produced a final answer; the text is the last thing it said.
    BestEffort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptStep {
    pub turn: usize,
    pub thought: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    #[serde(default)]
    pub refused: bool,
    #[serde(default)]
    pub violations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Telemetry {
    pub model_turns: usize,
    /// Dispatched calls per tool.
    pub tool_calls: BTreeMap<String, usize>,
    /// Calls to tools outside the agent's allowed set.
    pub refused: usize,
    pub definition_queries: usize,
    pub reference_queries: usize,
    pub reasks: usize,
}

impl Telemetry {
    pub fn total_tool_calls(&self) -> usize {
        self.tool_calls.values().sum::<usize>() + self.refused
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub agent: String,
    pub steps: Vec<TranscriptStep>,
    pub telemetry: Telemetry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactOutcome {
    pub transcript: Transcript,
    pub final_text: String,
    pub status: RunStatus,
    /// Full conversation, for follow-up turns.
    pub messages: Vec<Message>,
}

fn refusal(name: &str, allowed: &[ToolName]) -> String {
    let names: Vec<&str> = allowed.iter().map(|t| t.as_str()).collect();
    format!(
        "Error: tool '{name}' is not available to this agent. Available tools: {}.",
        names.join(", ")
    )
}

/// Alternate model turns and tool calls until the model answers without
/// calling a tool. After `max_steps` tool-calling turns the model is asked
/// once to finalize.
pub fn run_react(spec: &AgentSpec, llm: &dyn LlmBackend, toolbox: &Toolbox) -> Result<ReactOutcome, AgentError> {
    if let Some(missing) = spec.allowed_tools.iter().copied().find(|t| !toolbox.provides(*t)) {
        return Err(AgentError::ToolUnavailable(missing));
    }
    let tools = toolbox.specs(&spec.allowed_tools);
    let mut messages = vec![Message::system(&spec.system_prompt), Message::user(&spec.task_prompt)];
    let mut steps = Vec::new();
    let mut telemetry = Telemetry::default();
    let mut last_text = String::new();

    for turn in 0..spec.max_steps {
        let request = ChatRequest::new(&spec.name, messages.clone(), spec.temperature).with_tools(tools.clone());
        let response = llm.complete(&request)?;
        telemetry.model_turns += 1;
        if !response.content.trim().is_empty() {
            last_text = response.content.clone();
        }
        messages.push(Message::assistant(&response.content, response.tool_calls.clone()));
        if response.tool_calls.is_empty() {
            steps.push(TranscriptStep {
                turn,
                thought: response.content.clone(),
                tool_call: None,
                observation: None,
                refused: false,
                violations: 0,
            });
            return Ok(finish(spec, steps, telemetry, response.content, RunStatus::Completed, messages));
        }
        for (i, call) in response.tool_calls.iter().enumerate() {
            let thought = if i == 0 { response.content.clone() } else { String::new() };
            let tool = ToolName::parse(&call.name).filter(|t| spec.allows(*t));
            let (observation, refused, violations) = match tool {
                None => {
                    telemetry.refused += 1;
                    (refusal(&call.name, &spec.allowed_tools), true, 0)
                }
                Some(tool) => {
                    *telemetry.tool_calls.entry(tool.as_str().to_string()).or_default() += 1;
                    let args = match &call.arguments {
                        Value::Null => Value::Object(Default::default()),
                        other => other.clone(),
                    };
                    let obs = toolbox.invoke(tool, &args)?;
                    telemetry.definition_queries += obs.definition_queries;
                    telemetry.reference_queries += obs.reference_queries;
                    (obs.text, false, obs.violations)
                }
            };
            messages.push(Message::tool(&call.id, &observation));
            steps.push(TranscriptStep {
                turn,
                thought,
                tool_call: Some(call.clone()),
                observation: Some(observation),
                refused,
                violations,
            });
        }
    }

    messages.push(Message::user(FINALIZE_NOW));
    let request = ChatRequest::new(&spec.name, messages.clone(), spec.temperature);
    let response = llm.complete(&request)?;
    telemetry.model_turns += 1;
    messages.push(Message::assistant(&response.content, response.tool_calls.clone()));
    let turn = spec.max_steps;
    steps.push(TranscriptStep {
        turn,
        thought: response.content.clone(),
        tool_call: None,
        observation: None,
        refused: false,
        violations: 0,
    });
    if response.tool_calls.is_empty() && !response.content.trim().is_empty() {
        Ok(finish(spec, steps, telemetry, response.content, RunStatus::ForcedFinal, messages))
    } else {
        if !response.content.trim().is_empty() {
            last_text = response.content;
        }
        Ok(finish(spec, steps, telemetry, last_text, RunStatus::BestEffort, messages))
    }
}

fn finish(
    spec: &AgentSpec,
    steps: Vec<TranscriptStep>,
    telemetry: Telemetry,
    final_text: String,
    status: RunStatus,
    messages: Vec<Message>,
) -> ReactOutcome {
    ReactOutcome {
        transcript: Transcript { agent: spec.name.clone(), steps, telemetry },
        final_text,
        status,
        messages,
    }
}

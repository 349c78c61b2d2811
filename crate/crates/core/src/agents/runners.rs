use serde::{Deserialize, Serialize};

use super::prelude::install_assert_prelude;
use super::prompts::PromptTemplate;
use super::react::{run_react, ReactOutcome, RunStatus, Transcript, TranscriptStep};
use super::reports::{
    parse_context_report, parse_property_report, render_context_report, render_property_report, ContextAnalysisReport,
    PropertyAnalysisReport, ReportError,
};
use super::toolbox::{tool_spec, Toolbox};
use super::{AgentError, AgentSpec, ToolName, CPC_CALLER, SPA_CALLER};
use crate::edit_engine::EditError;
use crate::harness::llm::{ChatRequest, LlmBackend, Message};
use crate::repo_model::snapshot;

/// An agent's final report: parsed when possible, raw otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport<R> {
    pub report: Option<R>,
    pub raw: String,
    pub parse_error: Option<String>,
    /// Canonical rendering of `report`, or `raw` when parsing failed.
    pub rendered: String,
    pub status: RunStatus,
    pub transcript: Transcript,
}

fn tools_section(tools: &[ToolName]) -> String {
    tools
        .iter()
        .map(|t| format!("- {}: {}", t.as_str(), tool_spec(*t).description))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parse the final text; on failure ask once more with the format spec.
fn finalize<R>(
    spec: &AgentSpec,
    llm: &dyn LlmBackend,
    mut outcome: ReactOutcome,
    parse: fn(&str) -> Result<R, ReportError>,
    render: fn(&R) -> String,
) -> Result<AgentReport<R>, AgentError> {
    let first_error = match parse(&outcome.final_text) {
        Ok(report) => {
            return Ok(AgentReport {
                rendered: render(&report),
                report: Some(report),
                raw: outcome.final_text,
                parse_error: None,
                status: outcome.status,
                transcript: outcome.transcript,
            })
        }
        Err(e) => e,
    };
    let reask = PromptTemplate::Reask.render(&[("error", &first_error.0), ("output_format", &spec.output_format)]);
    outcome.messages.push(Message::user(reask));
    let response = llm.complete(&ChatRequest::new(&spec.name, outcome.messages.clone(), spec.temperature))?;
    let telemetry = &mut outcome.transcript.telemetry;
    telemetry.model_turns += 1;
    telemetry.reasks += 1;
    let turn = outcome.transcript.steps.last().map_or(0, |s| s.turn + 1);
    outcome.transcript.steps.push(TranscriptStep {
        turn,
        thought: response.content.clone(),
        tool_call: None,
        observation: None,
        refused: false,
        violations: 0,
    });
    match parse(&response.content) {
        Ok(report) => Ok(AgentReport {
            rendered: render(&report),
            report: Some(report),
            raw: response.content,
            parse_error: None,
            status: outcome.status,
            transcript: outcome.transcript,
        }),
        Err(second) => {
            let raw = if response.content.trim().is_empty() { outcome.final_text } else { response.content };
            log::warn!("{} report unparseable after one re-ask: {second}", spec.name);
            Ok(AgentReport {
                report: None,
                rendered: raw.clone(),
                raw,
                parse_error: Some(second.0),
                status: outcome.status,
                transcript: outcome.transcript,
            })
        }
    }
}

pub fn cpc_spec(issue: &str, repo_tree: &str, max_steps: usize) -> AgentSpec {
    let tools = ToolName::STATIC.to_vec();
    let output_format = PromptTemplate::ContextReportFormat.text().to_string();
    AgentSpec {
        name: CPC_CALLER.to_string(),
        system_prompt: PromptTemplate::CpcSystem
            .render(&[("available_tools", &tools_section(&tools)), ("output_format", &output_format)]),
        task_prompt: PromptTemplate::CpcTask.render(&[("issue_report", issue), ("repo_structure", repo_tree)]),
        allowed_tools: tools,
        output_format,
        max_steps,
        temperature: 0.0,
    }
}

/// Explore the repository statically and report the collected context.
pub fn run_cpc_agent(
    issue: &str,
    repo_tree: &str,
    toolbox: &Toolbox,
    llm: &dyn LlmBackend,
    max_steps: usize,
) -> Result<AgentReport<ContextAnalysisReport>, AgentError> {
    let spec = cpc_spec(issue, repo_tree, max_steps);
    let outcome = run_react(&spec, llm, toolbox)?;
    finalize(&spec, llm, outcome, parse_context_report, render_context_report)
}

pub fn spa_spec(issue: &str, context_report: Option<&str>, repo_tree: &str, prelude_header: &str, max_steps: usize) -> AgentSpec {
    let tools = ToolName::ALL.to_vec();
    let output_format = PromptTemplate::PropertyReportFormat.text().to_string();
    AgentSpec {
        name: SPA_CALLER.to_string(),
        system_prompt: PromptTemplate::SpaSystem.render(&[
            ("available_tools", &tools_section(&tools)),
            ("output_format", &output_format),
            ("prelude_header", prelude_header),
        ]),
        task_prompt: PromptTemplate::SpaTask.render(&[
            ("issue_report", issue),
            ("context_report", context_report.unwrap_or("(not available)")),
            ("repo_structure", repo_tree),
        ]),
        allowed_tools: tools,
        output_format,
        max_steps,
        temperature: 0.0,
    }
}

/// Hypothesize, instrument and validate safety properties, then roll every
/// instrumentation edit back.
pub fn run_spa_agent(
    issue: &str,
    context_report: Option<&str>,
    repo_tree: &str,
    toolbox: &Toolbox,
    llm: &dyn LlmBackend,
    max_steps: usize,
) -> Result<AgentReport<PropertyAnalysisReport>, AgentError> {
    let poc = toolbox.poc().ok_or(AgentError::ToolUnavailable(ToolName::RunPoc))?;
    let history = toolbox.history().ok_or(AgentError::ToolUnavailable(ToolName::ApplyEdits))?.clone();
    let before = snapshot(toolbox.root(), toolbox.layout()).map_err(|e| AgentError::Cleanup(e.to_string()))?;
    let prelude = install_assert_prelude(poc.sandbox().as_ref())?;
    let spec = spa_spec(issue, context_report, repo_tree, &prelude.header, max_steps);

    let result = run_react(&spec, llm, toolbox).and_then(|outcome| finalize(&spec, llm, outcome, parse_property_report, render_property_report));

    let cleanup = {
        let mut h = history.lock().expect("history poisoned");
        match h.rollback_all_applied_edits() {
            Ok(_) | Err(EditError::EmptyHistory) => Ok(()),
            Err(e) => Err(AgentError::Cleanup(e.to_string())),
        }
    };
    let after = snapshot(toolbox.root(), toolbox.layout()).map_err(|e| AgentError::Cleanup(e.to_string()))?;
    cleanup?;
    if after.digest != before.digest {
        return Err(AgentError::Cleanup(format!(
            "workspace digest changed across the agent run ({} -> {})",
            before.digest, after.digest
        )));
    }
    result
}

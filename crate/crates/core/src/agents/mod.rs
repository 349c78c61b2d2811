//! The ReAct engine, the context pre-collection and safety-property agents,
//! their structured reports and the assertion prelude.

mod prelude;
mod prompts;
mod react;
mod reports;
mod runners;
mod toolbox;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prelude::{install_assert_prelude, PreludeInfo, ASSERT_MACRO, PRELUDE_PATH};
pub use prompts::{render_template, PromptTemplate};
pub use react::{run_react, ReactOutcome, RunStatus, Telemetry, Transcript, TranscriptStep};
pub use reports::{
    build_enhanced_report, parse_context_report, parse_property_report, render_context_report,
    render_property_report, AssertionResult, ContextAnalysisReport, ContextItem, ContextSource, EnhancedIssueReport,
    PropertyAnalysisReport, ReportError, SafetyProperty, TraceLink, CONTEXT_HEADING, ISSUE_HEADING,
    NO_STABLE_PROPERTY, PROPERTY_HEADING,
};
pub use runners::{run_cpc_agent, run_spa_agent, AgentReport};
pub use toolbox::{ToolObservation, Toolbox, ToolboxLimits};

use crate::harness::llm::LlmError;

pub const CPC_CALLER: &str = "cpc_agent";
pub const SPA_CALLER: &str = "spa_agent";
pub const CPC_MAX_STEPS: usize = 25;
pub const SPA_MAX_STEPS: usize = 40;

/// Agent-facing tool names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    SearchCodeElement,
    ReadCode,
    ResolveCodeSymbol,
    RunPoc,
    ApplyEdits,
    RollbackTheLatestOneEditSet,
    RollbackAllAppliedEdits,
    RunPythonCode,
}

impl ToolName {
    pub const ALL: [ToolName; 8] = [
        ToolName::SearchCodeElement,
        ToolName::ReadCode,
        ToolName::ResolveCodeSymbol,
        ToolName::RunPoc,
        ToolName::ApplyEdits,
        ToolName::RollbackTheLatestOneEditSet,
        ToolName::RollbackAllAppliedEdits,
        ToolName::RunPythonCode,
    ];

    /// The static-analysis tools the context agent may use.
    pub const STATIC: [ToolName; 3] = [ToolName::SearchCodeElement, ToolName::ReadCode, ToolName::ResolveCodeSymbol];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::SearchCodeElement => "search_code_element",
            ToolName::ReadCode => "read_code",
            ToolName::ResolveCodeSymbol => "resolve_code_symbol",
            ToolName::RunPoc => "run_poc",
            ToolName::ApplyEdits => "apply_edits",
            ToolName::RollbackTheLatestOneEditSet => "rollback_the_latest_one_edit_set",
            ToolName::RollbackAllAppliedEdits => "rollback_all_applied_edits",
            ToolName::RunPythonCode => "run_python_code",
        }
    }

    pub fn parse(name: &str) -> Option<ToolName> {
        ToolName::ALL.into_iter().find(|t| t.as_str() == name)
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One agent configuration: who it is, which tools it may call, its
/// rendered prompts and its step budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub allowed_tools: Vec<ToolName>,
    pub system_prompt: String,
    pub task_prompt: String,
    /// Output format section, repeated when a malformed report is re-asked.
    pub output_format: String,
    pub max_steps: usize,
    pub temperature: f64,
}

impl AgentSpec {
    pub fn allows(&self, tool: ToolName) -> bool {
        self.allowed_tools.contains(&tool)
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("tool {0} is allowed but the toolbox cannot provide it")]
    ToolUnavailable(ToolName),
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("cannot write the assertion prelude: {0}")]
    WriteFailure(String),
    #[error("workspace cleanup failed: {0}")]
    Cleanup(String),
}

//! Sandboxed PoC compilation and execution, full-log storage and the
//! script runner agents use to analyze stored logs.

mod logs;
mod poc;
mod sandbox;
mod script;

use thiserror::Error;

pub use logs::{
    summarize_assertions, truncate_log, AssertionSummary, LogStore, SanitizerSignatures, DEFAULT_SANITIZER_SIGNATURES,
};
pub use poc::{PoCRunResult, PocConfig, PocPhase, PocToolkit};
pub use sandbox::{ContainerSandbox, ExecOutput, LocalSandbox, Sandbox, SandboxDescriptor};
pub use script::{
    PythonInterpreter, RawScriptRun, ScriptInterpreter, ScriptResult, ScriptRunner, Violation,
    DEFAULT_SCRIPT_OUTPUT_CAP,
};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("no PoC output named '{0}'")]
    UnknownName(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

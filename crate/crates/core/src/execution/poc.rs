use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::logs::{summarize_assertions, truncate_log, AssertionSummary, LogStore, SanitizerSignatures};
use super::sandbox::Sandbox;
use super::ExecError;
use crate::edit_engine::NameRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PocPhase {
    CompileError,
    Ran,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoCRunResult {
    pub fixed_name: String,
    pub phase: PocPhase,
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub truncated_log: String,
    pub summary: AssertionSummary,
    pub sanitizer_triggered: bool,
}

impl PoCRunResult {
    pub fn compiled(&self) -> bool {
        self.phase == PocPhase::Ran
    }

    /// Agent-facing rendering, assertion summary first.
    pub fn render(&self) -> String {
        let mut out = match self.phase {
            PocPhase::CompileError => format!(
                "PoC run '{}': compilation failed (exit code {})\n",
                self.fixed_name,
                code(self.exit_code)
            ),
            PocPhase::Ran => format!(
                "PoC run '{}': exit code {}, sanitizer error: {}{}\n",
                self.fixed_name,
                code(self.exit_code),
                if self.sanitizer_triggered { "yes" } else { "no" },
                if self.timed_out { ", timed out" } else { "" }
            ),
        };
        if self.phase == PocPhase::Ran {
            out.push_str(&self.summary.render());
        }
        out.push_str(match self.phase {
            PocPhase::CompileError => "--- compiler output ---\n",
            PocPhase::Ran => "--- execution log ---\n",
        });
        out.push_str(&self.truncated_log);
        if !self.truncated_log.ends_with('\n') {
            out.push('\n');
        }
        out
    }
}

fn code(c: Option<i32>) -> String {
    c.map_or_else(|| "none (killed)".to_string(), |c| c.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PocConfig {
    /// Compiles the workspace; `None` when the reproduction command builds.
    pub build_command: Option<String>,
    pub repro_command: String,
    pub timeout: Duration,
    pub head_lines: usize,
    pub tail_lines: usize,
}

impl PocConfig {
    pub fn new(build_command: Option<String>, repro_command: impl Into<String>) -> Self {
        Self {
            build_command,
            repro_command: repro_command.into(),
            timeout: Duration::from_secs(300),
            head_lines: 100,
            tail_lines: 100,
        }
    }
}

/// Compiles and runs the PoC in one sandbox; full logs go to the log store.
pub struct PocToolkit {
    sandbox: Arc<dyn Sandbox>,
    config: PocConfig,
    signatures: SanitizerSignatures,
    logs: LogStore,
    names: Mutex<NameRegistry>,
    run_lock: Mutex<()>,
}

fn merged(command: &str) -> String {
    format!("( {command}\n) 2>&1")
}

impl PocToolkit {
    pub fn new(sandbox: Arc<dyn Sandbox>, config: PocConfig, signatures: SanitizerSignatures, logs: LogStore) -> Self {
        Self { sandbox, config, signatures, logs, names: Mutex::new(NameRegistry::default()), run_lock: Mutex::new(()) }
    }

    pub fn logs(&self) -> &LogStore {
        &self.logs
    }

    pub fn sandbox(&self) -> &Arc<dyn Sandbox> {
        &self.sandbox
    }

    pub fn signatures(&self) -> &SanitizerSignatures {
        &self.signatures
    }

    pub fn run_poc(&self, unique_name: &str) -> Result<PoCRunResult, ExecError> {
        let _serial = self.run_lock.lock().expect("poc lock poisoned");
        let base = if unique_name.trim().is_empty() { "run" } else { unique_name };
        let fixed_name = self.names.lock().expect("name lock poisoned").claim(base);
        if let Some(build) = &self.config.build_command {
            let out = self.sandbox.exec(&merged(build), self.config.timeout)?;
            if out.timed_out || out.exit_code != Some(0) {
                let mut log = out.stdout;
                if out.timed_out {
                    log.push_str(&format!("[build timed out after {:?}]\n", self.config.timeout));
                }
                return Ok(self.finish(fixed_name, PocPhase::CompileError, out.exit_code, out.timed_out, log));
            }
        }
        let out = self.sandbox.exec(&merged(&self.config.repro_command), self.config.timeout)?;
        let mut log = out.stdout;
        if out.timed_out {
            log.push_str(&format!("[PoC timed out after {:?}]\n", self.config.timeout));
        }
        Ok(self.finish(fixed_name, PocPhase::Ran, out.exit_code, out.timed_out, log))
    }

    fn finish(&self, fixed_name: String, phase: PocPhase, exit_code: Option<i32>, timed_out: bool, log: String) -> PoCRunResult {
        let summary = summarize_assertions(&log);
        let sanitizer_triggered = phase == PocPhase::Ran && self.signatures.matches(&log);
        let truncated_log = truncate_log(&log, self.config.head_lines, self.config.tail_lines, &fixed_name);
        self.logs.insert(&fixed_name, log);
        PoCRunResult { fixed_name, phase, exit_code, timed_out, truncated_log, summary, sanitizer_triggered }
    }

    pub fn get_poc_output(&self, name: &str) -> Result<String, ExecError> {
        self.logs.get(name).ok_or_else(|| ExecError::UnknownName(name.to_string()))
    }
}

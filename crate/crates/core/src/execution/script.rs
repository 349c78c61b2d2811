use std::collections::HashMap;
use std::process::Command;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::logs::LogStore;
use super::sandbox::run_with_timeout;
use super::ExecError;

const WRAPPER: &str = include_str!("../../assets/script_sandbox.py");
const VIOLATION_SENTINEL: &str = "\u{0}VRVIOLATION ";
const ERROR_SENTINEL: &str = "\u{0}VRERROR";

pub const DEFAULT_SCRIPT_OUTPUT_CAP: usize = 8 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `read`, `write`, `fs`, `cmd` or `net`.
    pub kind: String,
    pub detail: String,
}

/// What an interpreter reports for one script.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawScriptRun {
    pub stdout: String,
    pub violations: Vec<Violation>,
    pub raised: bool,
    pub timed_out: bool,
}

/// Executes agent scripts in an isolated runtime with `get_poc_output`
/// available and file/command access stubbed out.
pub trait ScriptInterpreter: Send + Sync {
    fn name(&self) -> &str;
    fn run(&self, code: &str, logs: &HashMap<String, String>, timeout: Duration) -> Result<RawScriptRun, ExecError>;
}

/// CPython in isolated mode, run from a throwaway directory with an empty
/// environment.
pub struct PythonInterpreter {
    python: String,
}

impl PythonInterpreter {
    pub fn new(python: impl Into<String>) -> Self {
        Self { python: python.into() }
    }
}

impl Default for PythonInterpreter {
    fn default() -> Self {
        Self::new("python3")
    }
}

fn parse_stderr(stderr: &str, run: &mut RawScriptRun) {
    for line in stderr.lines() {
        if let Some(json) = line.strip_prefix(VIOLATION_SENTINEL) {
            if let Ok(v) = serde_json::from_str::<Violation>(json) {
                run.violations.push(v);
            }
        } else if line.starts_with(ERROR_SENTINEL) {
            run.raised = true;
        }
    }
}

impl ScriptInterpreter for PythonInterpreter {
    fn name(&self) -> &str {
        "python"
    }

    fn run(&self, code: &str, logs: &HashMap<String, String>, timeout: Duration) -> Result<RawScriptRun, ExecError> {
        let dir = tempfile::Builder::new().prefix("vr-script-").tempdir()?;
        std::fs::write(dir.path().join("runner.py"), WRAPPER)?;
        std::fs::write(dir.path().join("script.py"), code)?;
        std::fs::write(
            dir.path().join("logs.json"),
            serde_json::to_vec(logs).map_err(|e| ExecError::Io(std::io::Error::other(e)))?,
        )?;
        let mut cmd = Command::new(&self.python);
        cmd.arg("-I").arg("-S").arg("runner.py").current_dir(dir.path()).env_clear();
        cmd.env("PYTHONIOENCODING", "utf-8").env("PYTHONDONTWRITEBYTECODE", "1");
        let out = run_with_timeout(cmd, timeout)?;
        let mut run = RawScriptRun { stdout: out.stdout, timed_out: out.timed_out, ..Default::default() };
        parse_stderr(&out.stderr, &mut run);
        if !run.raised && out.exit_code != Some(0) && !out.timed_out {
            // The wrapper itself failed; surface its stderr.
            run.raised = true;
            run.stdout.push_str(&out.stderr.replace('\u{0}', ""));
        }
        Ok(run)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptResult {
    pub output: String,
    pub truncated: bool,
    pub violations: Vec<Violation>,
    /// Last line of the traceback when the script raised.
    pub error: Option<String>,
    pub timed_out: bool,
}

impl ScriptResult {
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.output.is_empty() {
            out.push_str("(no output)\n");
        } else {
            out.push_str(&self.output);
            if !self.output.ends_with('\n') {
                out.push('\n');
            }
        }
        for v in &self.violations {
            out.push_str(&format!(
                "[sandbox] blocked {} operation: {}\n",
                v.kind, v.detail
            ));
        }
        if self.timed_out {
            out.push_str("[sandbox] script timed out\n");
        }
        out
    }
}

fn cap_output(text: &str, cap: usize) -> (String, bool) {
    if text.len() <= cap {
        return (text.to_string(), false);
    }
    let mut end = cap;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    (format!("{}\n... [output truncated at {cap} bytes]\n", &text[..end]), true)
}

/// The agent-facing script toolkit.
pub struct ScriptRunner {
    interpreter: Arc<dyn ScriptInterpreter>,
    logs: LogStore,
    output_cap: usize,
    timeout: Duration,
}

impl ScriptRunner {
    pub fn new(interpreter: Arc<dyn ScriptInterpreter>, logs: LogStore) -> Self {
        Self { interpreter, logs, output_cap: DEFAULT_SCRIPT_OUTPUT_CAP, timeout: Duration::from_secs(30) }
    }

    pub fn with_limits(mut self, output_cap: usize, timeout: Duration) -> Self {
        self.output_cap = output_cap;
        self.timeout = timeout;
        self
    }

    pub fn run_script(&self, code: &str) -> Result<ScriptResult, ExecError> {
        let raw = self.interpreter.run(code, &self.logs.snapshot(), self.timeout)?;
        let error = if raw.raised {
            raw.stdout.lines().rev().find(|l| !l.trim().is_empty()).map(str::to_string)
        } else {
            None
        };
        let (output, truncated) = cap_output(&raw.stdout, self.output_cap);
        Ok(ScriptResult { output, truncated, violations: raw.violations, error, timed_out: raw.timed_out })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runner() -> ScriptRunner {
        let logs = LogStore::default();
        logs.insert("baseline", "[SPA] a PASS\n[SPA] a FAIL expr=\"x\"\n[SPA] b FAIL expr=\"y\"\n".into());
        ScriptRunner::new(Arc::new(PythonInterpreter::default()), logs)
    }

    #[test]
    fn bridges_logs() {
        let r = runner().run_script("print(get_poc_output('baseline').count('FAIL'))").unwrap();
        assert_eq!(r.output, "2\n");
        assert!(r.violations.is_empty());
        assert!(r.error.is_none());
    }

    #[test]
    fn blocks_files_and_commands() {
        let runner = runner();
        for code in [
            "open('/etc/hostname').read()",
            "import io\nio.open('x.txt', 'w').write('x')",
            "import os\nos.system('true')",
            "import subprocess\nsubprocess.run(['true'])",
            "import os\nos.listdir('/')",
        ] {
            let r = runner.run_script(code).unwrap();
            assert_eq!(r.violations.len(), 1, "{code}: {r:?}");
            assert!(r.output.contains("blocked by the sandboxed execution environment"), "{code}: {}", r.output);
            assert!(r.error.is_some());
        }
    }

    #[test]
    fn imports_still_work_and_output_is_capped() {
        let r = runner()
            .with_limits(64, Duration::from_secs(30))
            .run_script("import re, json, collections\nprint('x' * 1000)")
            .unwrap();
        assert!(r.truncated);
        assert!(r.violations.is_empty(), "{r:?}");
        assert!(r.output.len() < 200);
    }

    #[test]
    fn runtime_errors_are_output() {
        let r = runner().run_script("print('thinking: wraps at 2^32')\n1/0").unwrap();
        assert!(r.output.starts_with("thinking: wraps at 2^32\n"));
        assert_eq!(r.error.as_deref(), Some("ZeroDivisionError: division by zero"));
    }
}

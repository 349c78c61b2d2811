use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

use super::{AgentError, ToolName};
use crate::code_search::{read_code, render_read_observation, render_search_observation, search_code_element};
use crate::edit_engine::{parse_edit_blocks, EditError, EditHistory};
use crate::execution::{ExecError, PocToolkit, ScriptRunner};
use crate::harness::llm::ToolSpec;
use crate::repo_model::RepoLayout;
use crate::symbol_analysis::{
    open_backend, plan_queries, render_resolution, resolve, MarkerKind, SymbolBackend, SymbolBackendConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToolboxLimits {
    pub search_results: usize,
    pub reference_cap: usize,
    pub read_radius: usize,
}

impl Default for ToolboxLimits {
    fn default() -> Self {
        Self {
            search_results: crate::code_search::DEFAULT_RESULT_LIMIT,
            reference_cap: crate::symbol_analysis::DEFAULT_REFERENCE_CAP,
            read_radius: 20,
        }
    }
}

/// Result of one tool invocation as shown to the model, plus counters the
/// transcript keeps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ToolObservation {
    pub text: String,
    pub ok: bool,
    pub violations: usize,
    pub definition_queries: usize,
    pub reference_queries: usize,
}

impl ToolObservation {
    fn ok(text: String) -> Self {
        Self { text, ok: true, ..Default::default() }
    }

    fn error(text: impl std::fmt::Display) -> Self {
        Self { text: format!("Error: {text}"), ok: false, ..Default::default() }
    }
}

struct SymbolSlot {
    generation: u64,
    backend: Option<Box<dyn SymbolBackend>>,
}

/// The toolkits of one issue instance. Static tools are always present; the
/// dynamic toolkits are attached when the workspace supports them.
pub struct Toolbox {
    root: PathBuf,
    layout: RepoLayout,
    limits: ToolboxLimits,
    symbol_config: SymbolBackendConfig,
    symbols: Mutex<SymbolSlot>,
    // Bumped whenever the tree changes so the symbol index is rebuilt.
    generation: Mutex<u64>,
    poc: Option<Arc<PocToolkit>>,
    history: Option<Arc<Mutex<EditHistory>>>,
    scripts: Option<ScriptRunner>,
}

fn str_arg<'a>(args: &'a Value, key: &str) -> Result<&'a str, String> {
    args.get(key).and_then(Value::as_str).ok_or_else(|| format!("missing string argument '{key}'"))
}

fn opt_str_arg<'a>(args: &'a Value, key: &str) -> &'a str {
    args.get(key).and_then(Value::as_str).unwrap_or("")
}

fn usize_arg(args: &Value, key: &str) -> Result<Option<usize>, String> {
    match args.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n.as_u64().map(|v| Some(v as usize)).ok_or_else(|| format!("'{key}' must be a non-negative integer")),
        Some(Value::String(s)) => s.trim().parse().map(Some).map_err(|_| format!("'{key}' must be a non-negative integer")),
        Some(_) => Err(format!("'{key}' must be a non-negative integer")),
    }
}

fn lines_arg(args: &Value) -> Result<Vec<usize>, String> {
    match args.get("mark_lines") {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_u64().map(|n| n as usize).ok_or_else(|| "'mark_lines' must be a list of line numbers".to_string()))
            .collect(),
        Some(_) => Err("'mark_lines' must be a list of line numbers".into()),
    }
}

fn schema(properties: Value, required: &[&str]) -> Value {
    json!({ "type": "object", "properties": properties, "required": required })
}

pub(crate) fn tool_spec(tool: ToolName) -> ToolSpec {
    let mark_lines = json!({ "type": "array", "items": { "type": "integer" }, "description": "Line numbers to annotate with a `// <<<<< path:line` marker." });
    let (description, parameters) = match tool {
        ToolName::SearchCodeElement => (
            "Retrieve the full code of a code element (function, class, struct, union, enum, macro or global variable) by name. Use `Scope::name` for C++ members. Leave `file` empty to search the whole repository.",
            schema(
                json!({
                    "name": { "type": "string" },
                    "file": { "type": "string", "description": "Repository-relative path, or empty." },
                    "mark_lines": mark_lines
                }),
                &["name"],
            ),
        ),
        ToolName::ReadCode => (
            "Read `num` lines before and after line `center` of a file.",
            schema(
                json!({
                    "file": { "type": "string" },
                    "center": { "type": "integer" },
                    "num": { "type": "integer" },
                    "mark_lines": mark_lines
                }),
                &["file", "center"],
            ),
        ),
        ToolName::ResolveCodeSymbol => (
            "Find definitions or references of symbols. Pass SEARCH/REPLACE blocks whose REPLACE part wraps each symbol of interest in FIND_DEFINITION(...) or FIND_REFERENCES(...). The repository is not modified.",
            schema(json!({ "edits": { "type": "string" } }), &["edits"]),
        ),
        ToolName::RunPoc => (
            "Compile the repository and run the proof-of-concept. Returns an assertion summary and the truncated log; the full log is stored under the returned name.",
            schema(json!({ "unique_name": { "type": "string" } }), &["unique_name"]),
        ),
        ToolName::ApplyEdits => (
            "Apply SEARCH/REPLACE blocks to the repository and record them as one commit.",
            schema(json!({ "unique_name": { "type": "string" }, "edits": { "type": "string" } }), &["unique_name", "edits"]),
        ),
        ToolName::RollbackTheLatestOneEditSet => ("Revert the most recently applied edit set.", schema(json!({}), &[])),
        ToolName::RollbackAllAppliedEdits => ("Revert every applied edit set.", schema(json!({}), &[])),
        ToolName::RunPythonCode => (
            "Run Python code in an isolated sandbox and return what it prints. `get_poc_output(name)` returns the full log of a PoC run. File access and commands are blocked.",
            schema(json!({ "code": { "type": "string" } }), &["code"]),
        ),
    };
    ToolSpec { name: tool.as_str().to_string(), description: description.to_string(), parameters }
}

impl Toolbox {
    pub fn new(root: &Path, layout: RepoLayout, symbol_config: SymbolBackendConfig) -> Self {
        Self {
            root: root.to_path_buf(),
            layout,
            limits: ToolboxLimits::default(),
            symbol_config,
            symbols: Mutex::new(SymbolSlot { generation: u64::MAX, backend: None }),
            generation: Mutex::new(0),
            poc: None,
            history: None,
            scripts: None,
        }
    }

    pub fn with_limits(mut self, limits: ToolboxLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_poc(mut self, poc: Arc<PocToolkit>) -> Self {
        self.poc = Some(poc);
        self
    }

    pub fn with_history(mut self, history: Arc<Mutex<EditHistory>>) -> Self {
        self.history = Some(history);
        self
    }

    pub fn with_scripts(mut self, scripts: ScriptRunner) -> Self {
        self.scripts = Some(scripts);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn layout(&self) -> &RepoLayout {
        &self.layout
    }

    pub fn poc(&self) -> Option<&Arc<PocToolkit>> {
        self.poc.as_ref()
    }

    pub fn history(&self) -> Option<&Arc<Mutex<EditHistory>>> {
        self.history.as_ref()
    }

    pub fn provides(&self, tool: ToolName) -> bool {
        match tool {
            ToolName::SearchCodeElement | ToolName::ReadCode | ToolName::ResolveCodeSymbol => true,
            ToolName::RunPoc => self.poc.is_some(),
            ToolName::ApplyEdits | ToolName::RollbackTheLatestOneEditSet | ToolName::RollbackAllAppliedEdits => {
                self.history.is_some()
            }
            ToolName::RunPythonCode => self.scripts.is_some(),
        }
    }

    pub fn specs(&self, tools: &[ToolName]) -> Vec<ToolSpec> {
        tools.iter().copied().map(tool_spec).collect()
    }

    /// Stop any language server process.
    pub fn shutdown(&self) {
        let mut slot = self.symbols.lock().expect("symbol slot poisoned");
        if let Some(mut backend) = slot.backend.take() {
            backend.shutdown();
        }
    }

    fn bump(&self) {
        *self.generation.lock().expect("generation poisoned") += 1;
    }

    /// Run one tool. Recoverable failures become error observations; only a
    /// missing sandbox is fatal.
    pub fn invoke(&self, tool: ToolName, args: &Value) -> Result<ToolObservation, AgentError> {
        if !self.provides(tool) {
            return Err(AgentError::ToolUnavailable(tool));
        }
        let result = match tool {
            ToolName::SearchCodeElement => self.search(args),
            ToolName::ReadCode => self.read(args),
            ToolName::ResolveCodeSymbol => self.resolve_symbol(args),
            ToolName::RunPoc => return self.run_poc(args),
            ToolName::ApplyEdits => self.apply(args),
            ToolName::RollbackTheLatestOneEditSet => self.rollback(false),
            ToolName::RollbackAllAppliedEdits => self.rollback(true),
            ToolName::RunPythonCode => return self.run_python(args),
        };
        Ok(result.unwrap_or_else(ToolObservation::error))
    }

    fn search(&self, args: &Value) -> Result<ToolObservation, String> {
        let name = str_arg(args, "name")?;
        let file = opt_str_arg(args, "file");
        let marks = lines_arg(args)?;
        let outcome = search_code_element(&self.root, &self.layout, name, file, &marks, self.limits.search_results)
            .map_err(|e| e.to_string())?;
        Ok(ToolObservation::ok(render_search_observation(name, &outcome)))
    }

    fn read(&self, args: &Value) -> Result<ToolObservation, String> {
        let file = str_arg(args, "file")?;
        let center = usize_arg(args, "center")?.ok_or("missing integer argument 'center'")?;
        let num = usize_arg(args, "num")?.unwrap_or(self.limits.read_radius);
        let marks = lines_arg(args)?;
        let outcome = read_code(&self.root, file, center, num, &marks).map_err(|e| e.to_string())?;
        Ok(ToolObservation::ok(render_read_observation(&outcome)))
    }

    fn resolve_symbol(&self, args: &Value) -> Result<ToolObservation, String> {
        let blocks = str_arg(args, "edits")?;
        let queries = plan_queries(&self.root, blocks).map_err(|e| e.to_string())?;
        let generation = *self.generation.lock().expect("generation poisoned");
        let mut slot = self.symbols.lock().expect("symbol slot poisoned");
        if slot.generation != generation || slot.backend.is_none() {
            if let Some(mut stale) = slot.backend.take() {
                stale.shutdown();
            }
            slot.backend = Some(open_backend(&self.symbol_config, &self.root, &self.layout).map_err(|e| e.to_string())?);
            slot.generation = generation;
        }
        let backend = slot.backend.as_mut().expect("backend opened above");
        let result = resolve(&queries, backend.as_mut(), self.limits.reference_cap);
        let count = |k: MarkerKind| queries.iter().filter(|q| q.kind == k).count();
        Ok(ToolObservation {
            text: render_resolution(&result),
            ok: true,
            violations: 0,
            definition_queries: count(MarkerKind::Definition),
            reference_queries: count(MarkerKind::References),
        })
    }

    fn run_poc(&self, args: &Value) -> Result<ToolObservation, AgentError> {
        let poc = self.poc.as_ref().expect("checked by provides");
        let name = opt_str_arg(args, "unique_name");
        match poc.run_poc(name) {
            Ok(r) => Ok(ToolObservation::ok(r.render())),
            Err(ExecError::SandboxUnavailable(e)) => Err(AgentError::SandboxUnavailable(e)),
            Err(e) => Ok(ToolObservation::error(e)),
        }
    }

    fn apply(&self, args: &Value) -> Result<ToolObservation, String> {
        let name = str_arg(args, "unique_name")?;
        let edits = parse_edit_blocks(str_arg(args, "edits")?).map_err(|e| e.to_string())?;
        let mut history = self.history.as_ref().expect("checked by provides").lock().expect("history poisoned");
        let result = history.apply_edits(name, &edits).map_err(|e| e.to_string())?;
        self.bump();
        Ok(ToolObservation::ok(format!(
            "Applied edit set '{}' as commit {}.\n{}\n{}",
            result.fixed_name,
            &result.commit_id[..result.commit_id.len().min(10)],
            result.diff.trim_end(),
            result.history.render()
        )))
    }

    fn rollback(&self, all: bool) -> Result<ToolObservation, String> {
        let mut history = self.history.as_ref().expect("checked by provides").lock().expect("history poisoned");
        let result = if all { history.rollback_all_applied_edits() } else { history.rollback_the_latest_one_edit_set() };
        let result = match result {
            Err(EditError::EmptyHistory) => return Ok(ToolObservation::ok("Nothing to roll back: no edit sets are applied.\n".into())),
            other => other.map_err(|e| e.to_string())?,
        };
        self.bump();
        let names: Vec<&str> = result.reverted.iter().map(|c| c.name.as_str()).collect();
        Ok(ToolObservation::ok(format!("Reverted: {}\n{}", names.join(", "), result.history.render())))
    }

    fn run_python(&self, args: &Value) -> Result<ToolObservation, AgentError> {
        let runner = self.scripts.as_ref().expect("checked by provides");
        let Ok(code) = str_arg(args, "code") else {
            return Ok(ToolObservation::error("missing string argument 'code'"));
        };
        match runner.run_script(code) {
            Ok(r) => Ok(ToolObservation {
                text: r.render(),
                ok: r.error.is_none() && !r.timed_out,
                violations: r.violations.len(),
                ..Default::default()
            }),
            Err(ExecError::SandboxUnavailable(e)) => Err(AgentError::SandboxUnavailable(e)),
            Err(e) => Ok(ToolObservation::error(e)),
        }
    }
}

impl Drop for Toolbox {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_tool_has_an_object_schema() {
        for tool in ToolName::ALL {
            let spec = tool_spec(tool);
            assert_eq!(spec.name, tool.as_str());
            assert_eq!(spec.parameters["type"], "object");
            assert_eq!(ToolName::parse(&spec.name), Some(tool));
        }
    }

    #[test]
    fn argument_helpers() {
        let args = json!({ "center": "12", "num": 3, "mark_lines": [4, 5] });
        assert_eq!(usize_arg(&args, "center").unwrap(), Some(12));
        assert_eq!(usize_arg(&args, "absent").unwrap(), None);
        assert_eq!(lines_arg(&args).unwrap(), vec![4, 5]);
        assert!(str_arg(&args, "file").is_err());
    }
}

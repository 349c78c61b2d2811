use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("line {line}: field '{field}': {reason}")]
    SchemaViolation { field: String, line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where an instance's repository comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkspaceSource {
    /// A host directory, copied before every run.
    Local(PathBuf),
    /// A container image holding the repository at `workdir`.
    Image { image: String, workdir: String },
}

/// One vulnerability issue to resolve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueInstance {
    pub instance_id: String,
    pub workspace: WorkspaceSource,
    pub issue_report: String,
    pub sanitizer_log: Option<String>,
    /// Compiles the project; `None` when `repro_command` builds too.
    pub build_command: Option<String>,
    pub repro_command: String,
    pub language: String,
}

fn violation(line: usize, field: &str, reason: impl Into<String>) -> InstanceError {
    InstanceError::SchemaViolation { field: field.to_string(), line, reason: reason.into() }
}

fn string_field(obj: &Map<String, Value>, line: usize, field: &str, required: bool) -> Result<Option<String>, InstanceError> {
    match obj.get(field) {
        None | Some(Value::Null) if required => Err(violation(line, field, "missing")),
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if required && s.trim().is_empty() => Err(violation(line, field, "must not be empty")),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(violation(line, field, "must be a string")),
    }
}

const KNOWN_FIELDS: &[&str] = &[
    "instance_id",
    "repo_path",
    "image",
    "workdir",
    "issue_report",
    "sanitizer_log",
    "build_command",
    "repro_command",
    "language",
];

fn parse_instance(value: &Value, line: usize, base_dir: &Path) -> Result<IssueInstance, InstanceError> {
    let obj = value.as_object().ok_or_else(|| violation(line, "<record>", "must be a JSON object"))?;
    if let Some(unknown) = obj.keys().find(|k| !KNOWN_FIELDS.contains(&k.as_str())) {
        return Err(violation(line, unknown, "unknown field"));
    }
    let req = |f| string_field(obj, line, f, true).map(|v| v.expect("required"));
    let opt = |f| string_field(obj, line, f, false);
    let instance_id = req("instance_id")?;
    let workspace = match (opt("repo_path")?, opt("image")?) {
        (Some(path), None) => {
            if opt("workdir")?.is_some() {
                return Err(violation(line, "workdir", "only valid together with 'image'"));
            }
            let path = PathBuf::from(path);
            WorkspaceSource::Local(if path.is_absolute() { path } else { base_dir.join(path) })
        }
        (None, Some(image)) => WorkspaceSource::Image { image, workdir: req("workdir")? },
        (Some(_), Some(_)) => return Err(violation(line, "image", "give exactly one of 'repo_path' and 'image'")),
        (None, None) => return Err(violation(line, "repo_path", "missing (or give 'image')")),
    };
    Ok(IssueInstance {
        instance_id,
        workspace,
        issue_report: req("issue_report")?,
        sanitizer_log: opt("sanitizer_log")?,
        build_command: opt("build_command")?,
        repro_command: req("repro_command")?,
        language: opt("language")?.unwrap_or_else(|| "c".into()),
    })
}

/// Read a JSON-lines instance file. Relative repository paths resolve
/// against the file's directory.
pub fn load_instances(path: &Path) -> Result<Vec<IssueInstance>, InstanceError> {
    let text = std::fs::read_to_string(path)?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut instances = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| violation(line, "<record>", format!("invalid JSON: {e}")))?;
        let instance = parse_instance(&value, line, base_dir)?;
        if !seen.insert(instance.instance_id.clone()) {
            return Err(violation(line, "instance_id", format!("duplicate id '{}'", instance.instance_id)));
        }
        instances.push(instance);
    }
    Ok(instances)
}

//! Code search toolkit: element lookup by name and windowed file reads, with
//! `// <<<<< path:line` markers on requested lines.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repo_model::{
    list_source_files, normalize_rel_path, parse_elements, read_source, CodeElement, ElementKind,
    LineRange, RepoError, RepoLayout,
};
use crate::text::split_lines;

pub const DEFAULT_RESULT_LIMIT: usize = 10;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error(transparent)]
    Repo(#[from] RepoError),
}

fn map_repo(err: RepoError) -> SearchError {
    match err {
        RepoError::FileNotFound(f) => SearchError::FileNotFound(f),
        other => SearchError::Repo(other),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeWindow {
    pub file: String,
    pub lines: LineRange,
    pub text: String,
    pub marked_lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementHit {
    pub name: String,
    pub qualifier: Option<String>,
    pub kind: ElementKind,
    pub window: CodeWindow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub hits: Vec<ElementHit>,
    /// Matches dropped by the result limit.
    pub truncated: usize,
}

impl SearchOutcome {
    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadOutcome {
    pub window: CodeWindow,
    pub warning: Option<String>,
}

pub fn marker(path: &str, line: usize) -> String {
    format!("// <<<<< {path}:{line}")
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"// <<<<< (.+):(\d+)$").unwrap())
}

/// Recover every `(path, line)` marker in a toolkit listing.
pub fn parse_markers(text: &str) -> Vec<(String, usize)> {
    text.lines()
        .filter_map(|l| {
            let caps = marker_regex().captures(l)?;
            Some((caps[1].to_string(), caps[2].parse().ok()?))
        })
        .collect()
}

/// Numbered listing of `lines` (1-based, inclusive) from `all`.
fn render_window(file: &str, all: &[&str], range: LineRange, mark_lines: &[usize]) -> CodeWindow {
    let mut text = String::new();
    let mut marked = Vec::new();
    for n in range.start..=range.end {
        let content = all.get(n - 1).copied().unwrap_or("");
        text.push_str(&n.to_string());
        text.push(' ');
        text.push_str(content);
        if mark_lines.contains(&n) {
            text.push(' ');
            text.push_str(&marker(file, n));
            marked.push(n);
        }
        text.push('\n');
    }
    CodeWindow { file: file.to_string(), lines: range, text, marked_lines: marked }
}

pub fn element_window(element: &CodeElement, source: &str, mark_lines: &[usize]) -> CodeWindow {
    let all = split_lines(source);
    render_window(&element.file, &all, element.lines, mark_lines)
}

/// Find elements named `name` (simple or `Scope::name`). An empty `file`
/// searches every source file under `root`.
pub fn search_code_element(
    root: &Path,
    layout: &RepoLayout,
    name: &str,
    file: &str,
    mark_lines: &[usize],
    limit: usize,
) -> Result<SearchOutcome, SearchError> {
    let file = normalize_rel_path(file);
    let files = if file.is_empty() {
        list_source_files(root, layout).map_err(map_repo)?
    } else {
        vec![file]
    };
    let mut hits = Vec::new();
    let mut truncated = 0;
    for f in &files {
        let source = read_source(root, f).map_err(map_repo)?;
        let elements = match parse_elements(root, f) {
            Ok(e) => e,
            Err(RepoError::ParseFailure { .. }) if files.len() > 1 => continue,
            Err(e) => return Err(map_repo(e)),
        };
        for element in elements.iter().filter(|e| e.matches_identifier(name)) {
            if hits.len() >= limit {
                truncated += 1;
                continue;
            }
            hits.push(ElementHit {
                name: element.name.clone(),
                qualifier: element.qualifier.clone(),
                kind: element.kind,
                window: element_window(element, &source, mark_lines),
            });
        }
    }
    Ok(SearchOutcome { hits, truncated })
}

/// Lines `[center - num, center + num]` clamped to the file. A center past
/// the end is clamped to the last line with a warning.
pub fn read_code(
    root: &Path,
    file: &str,
    center: usize,
    num: usize,
    mark_lines: &[usize],
) -> Result<ReadOutcome, SearchError> {
    let file = normalize_rel_path(file);
    let source = read_source(root, &file).map_err(map_repo)?;
    let all = split_lines(&source);
    if all.is_empty() {
        return Ok(ReadOutcome {
            window: CodeWindow { file, lines: LineRange { start: 1, end: 0 }, text: String::new(), marked_lines: vec![] },
            warning: Some("file is empty".into()),
        });
    }
    let eof = all.len();
    let mut warning = None;
    let mut center = center.max(1);
    if center > eof {
        warning = Some(format!("line {center} is beyond the end of {file} ({eof} lines); showing the last line instead"));
        center = eof;
    }
    let range = LineRange::new(center.saturating_sub(num).max(1), (center + num).min(eof));
    Ok(ReadOutcome { window: render_window(&file, &all, range, mark_lines), warning })
}

/// Agent-facing rendering of a search result.
pub fn render_search_observation(name: &str, outcome: &SearchOutcome) -> String {
    if outcome.hits.is_empty() {
        return format!("No match: no code element named '{name}' was found.");
    }
    let mut out = format!("Found {} code element(s) named '{name}'.\n", outcome.hits.len() + outcome.truncated);
    for hit in &outcome.hits {
        let qualified = match &hit.qualifier {
            Some(q) => format!("{q}::{}", hit.name),
            None => hit.name.clone(),
        };
        out.push_str(&format!(
            "\n{} ({}) in {}:{}\n{}",
            qualified, hit.kind, hit.window.file, hit.window.lines, hit.window.text
        ));
    }
    if outcome.truncated > 0 {
        out.push_str(&format!(
            "\n[truncated: {} more match(es) not shown; pass a file to narrow the search]\n",
            outcome.truncated
        ));
    }
    out
}

pub fn render_read_observation(outcome: &ReadOutcome) -> String {
    let mut out = String::new();
    if let Some(w) = &outcome.warning {
        out.push_str(&format!("Warning: {w}\n"));
    }
    out.push_str(&format!("{}:{}\n", outcome.window.file, outcome.window.lines));
    out.push_str(&outcome.window.text);
    out
}

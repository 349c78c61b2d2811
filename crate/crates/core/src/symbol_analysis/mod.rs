//! Code symbol analysis toolkit: marker-based definition/reference lookup.
//!
//! The agent wraps identifiers in `FIND_DEFINITION(..)` or
//! `FIND_REFERENCES(..)` inside a SEARCH/REPLACE block. The block is applied
//! only virtually: the wrapped token is mapped back to its coordinates in the
//! untouched file and handed to a symbol backend.

mod fallback;
mod lsp;
mod plan;

use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fallback::{identifier_tokens, FallbackIndex};
pub use lsp::LspBackend;
pub use plan::plan_queries;

use crate::repo_model::{LineRange, RepoLayout};

pub const DEFAULT_REFERENCE_CAP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarkerKind {
    Definition,
    References,
}

impl fmt::Display for MarkerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MarkerKind::Definition => "FIND_DEFINITION",
            MarkerKind::References => "FIND_REFERENCES",
        })
    }
}

/// A symbol occurrence in the original file; line and column are 1-based,
/// the column counts bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerQuery {
    pub kind: MarkerKind,
    pub symbol: String,
    pub file: String,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolLocation {
    pub file: String,
    pub lines: LineRange,
    /// The file's text over `lines`.
    pub preview: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum QueryOutcome {
    Locations { locations: Vec<SymbolLocation>, truncated: usize },
    NotFound,
    BackendError { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResolution {
    pub query: MarkerQuery,
    pub outcome: QueryOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionResult {
    pub backend: String,
    pub references_include_declaration: bool,
    pub outcomes: Vec<QueryResolution>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct BackendError(pub String);

#[derive(Debug, Error)]
pub enum SymbolError {
    #[error("malformed query block at byte {offset}: {reason}")]
    MalformedBlock { offset: usize, reason: String },
    #[error("SEARCH text not found in {file}")]
    SearchTextNotFound { file: String },
    #[error("SEARCH text appears {count} times in {file}; include more surrounding lines")]
    SearchTextAmbiguous { file: String, count: usize },
    #[error("no FIND_DEFINITION(...) or FIND_REFERENCES(...) markers found in the REPLACE sections")]
    NoMarkersFound,
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("symbol backend unavailable: {0}")]
    BackendUnavailable(String),
}

/// A symbol index opened over one repository root.
pub trait SymbolBackend: Send {
    fn name(&self) -> &str;
    /// Whether reference results list the declaring occurrence too.
    fn references_include_declaration(&self) -> bool;
    fn definition(&mut self, file: &str, line: usize, column: usize) -> Result<Vec<SymbolLocation>, BackendError>;
    fn references(&mut self, file: &str, line: usize, column: usize) -> Result<Vec<SymbolLocation>, BackendError>;
    fn shutdown(&mut self);
}

/// A primary backend that defers to a fallback whenever it errors.
pub struct ChainedBackend {
    primary: Box<dyn SymbolBackend>,
    fallback: Box<dyn SymbolBackend>,
    label: String,
}

impl ChainedBackend {
    pub fn new(primary: Box<dyn SymbolBackend>, fallback: Box<dyn SymbolBackend>) -> Self {
        let label = format!("{}+{}", primary.name(), fallback.name());
        Self { primary, fallback, label }
    }
}

impl SymbolBackend for ChainedBackend {
    fn name(&self) -> &str {
        &self.label
    }

    fn references_include_declaration(&self) -> bool {
        self.primary.references_include_declaration()
    }

    fn definition(&mut self, file: &str, line: usize, column: usize) -> Result<Vec<SymbolLocation>, BackendError> {
        self.primary
            .definition(file, line, column)
            .or_else(|_| self.fallback.definition(file, line, column))
    }

    fn references(&mut self, file: &str, line: usize, column: usize) -> Result<Vec<SymbolLocation>, BackendError> {
        self.primary
            .references(file, line, column)
            .or_else(|_| self.fallback.references(file, line, column))
    }

    fn shutdown(&mut self) {
        self.primary.shutdown();
        self.fallback.shutdown();
    }
}

/// How to obtain a symbol backend for a workspace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SymbolBackendConfig {
    #[default]
    Fallback,
    Lsp {
        command: Vec<String>,
        #[serde(default = "default_lsp_timeout")]
        timeout_secs: u64,
        #[serde(default = "default_true")]
        fallback: bool,
    },
}

fn default_lsp_timeout() -> u64 {
    30
}

fn default_true() -> bool {
    true
}


/// Open the configured backend over `root`.
pub fn open_backend(
    config: &SymbolBackendConfig,
    root: &Path,
    layout: &RepoLayout,
) -> Result<Box<dyn SymbolBackend>, SymbolError> {
    let index = || FallbackIndex::build(root, layout).map_err(|e| SymbolError::BackendUnavailable(e.0));
    match config {
        SymbolBackendConfig::Fallback => Ok(Box::new(index()?)),
        SymbolBackendConfig::Lsp { command, timeout_secs, fallback } => {
            match LspBackend::start(root, command, Duration::from_secs(*timeout_secs)) {
                Ok(lsp) if *fallback => Ok(Box::new(ChainedBackend::new(Box::new(lsp), Box::new(index()?)))),
                Ok(lsp) => Ok(Box::new(lsp)),
                Err(e) if *fallback => {
                    log::warn!("language server unavailable ({e}); using the fallback index");
                    Ok(Box::new(index()?))
                }
                Err(e) => Err(SymbolError::BackendUnavailable(e.0)),
            }
        }
    }
}

/// Resolve every query in order. Per-query failures become outcomes.
pub fn resolve(queries: &[MarkerQuery], backend: &mut dyn SymbolBackend, reference_cap: usize) -> ResolutionResult {
    let outcomes = queries
        .iter()
        .map(|q| {
            let result = match q.kind {
                MarkerKind::Definition => backend.definition(&q.file, q.line, q.column),
                MarkerKind::References => backend.references(&q.file, q.line, q.column),
            };
            let outcome = match result {
                Err(e) => QueryOutcome::BackendError { reason: e.0 },
                Ok(locs) if locs.is_empty() => QueryOutcome::NotFound,
                Ok(mut locations) => {
                    let cap = match q.kind {
                        MarkerKind::Definition => usize::MAX,
                        MarkerKind::References => reference_cap,
                    };
                    let truncated = locations.len().saturating_sub(cap);
                    locations.truncate(cap);
                    QueryOutcome::Locations { locations, truncated }
                }
            };
            QueryResolution { query: q.clone(), outcome }
        })
        .collect();
    ResolutionResult {
        backend: backend.name().to_string(),
        references_include_declaration: backend.references_include_declaration(),
        outcomes,
    }
}

/// Plan and resolve the marker queries in `edit_blocks`.
pub fn resolve_code_symbol(
    root: &Path,
    edit_blocks: &str,
    backend: &mut dyn SymbolBackend,
    reference_cap: usize,
) -> Result<ResolutionResult, SymbolError> {
    let queries = plan_queries(root, edit_blocks)?;
    Ok(resolve(&queries, backend, reference_cap))
}

const PREVIEW_LINES: usize = 8;

/// Agent-facing rendering of a resolution.
pub fn render_resolution(result: &ResolutionResult) -> String {
    let mut out = String::new();
    for (i, r) in result.outcomes.iter().enumerate() {
        let q = &r.query;
        out.push_str(&format!(
            "[{}] {}({}) at {}:{}:{}\n",
            i + 1,
            q.kind,
            q.symbol,
            q.file,
            q.line,
            q.column
        ));
        match &r.outcome {
            QueryOutcome::NotFound => out.push_str("  not found\n"),
            QueryOutcome::BackendError { reason } => out.push_str(&format!("  backend error: {reason}\n")),
            QueryOutcome::Locations { locations, truncated } => {
                if q.kind == MarkerKind::References {
                    let note = if result.references_include_declaration { "including" } else { "excluding" };
                    out.push_str(&format!("  {} reference(s), {note} the declaration\n", locations.len() + truncated));
                }
                for loc in locations {
                    out.push_str(&format!("  {}:{}\n", loc.file, loc.lines));
                    let lines: Vec<&str> = loc.preview.lines().collect();
                    for (k, line) in lines.iter().take(PREVIEW_LINES).enumerate() {
                        out.push_str(&format!("    {} {}\n", loc.lines.start + k, line));
                    }
                    if lines.len() > PREVIEW_LINES {
                        out.push_str("    ...\n");
                    }
                }
                if *truncated > 0 {
                    out.push_str(&format!("  [truncated: {truncated} more reference(s)]\n"));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Failing;

    impl SymbolBackend for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn references_include_declaration(&self) -> bool {
            false
        }
        fn definition(&mut self, _: &str, _: usize, _: usize) -> Result<Vec<SymbolLocation>, BackendError> {
            Err(BackendError("down".into()))
        }
        fn references(&mut self, _: &str, _: usize, _: usize) -> Result<Vec<SymbolLocation>, BackendError> {
            Err(BackendError("down".into()))
        }
        fn shutdown(&mut self) {}
    }

    fn repo() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("a.c"),
            "int helper(int x)\n{\n    return x + 1;\n}\n\nint main(void)\n{\n    return helper(2) + helper(3);\n}\n",
        )
        .unwrap();
        dir
    }

    #[test]
    fn outcomes_keep_query_order() {
        let dir = repo();
        let mut index = FallbackIndex::build(dir.path(), &RepoLayout::default()).unwrap();
        let blocks = "### a.c\n<<<<<<< SEARCH\n    return helper(2) + helper(3);\n=======\n    return FIND_REFERENCES(helper)(2) + helper(3);\n>>>>>>> REPLACE\n\
                      ### a.c\n<<<<<<< SEARCH\n    return x + 1;\n=======\n    return FIND_DEFINITION(x) + 1;\n>>>>>>> REPLACE\n";
        let result = resolve_code_symbol(dir.path(), blocks, &mut index, 2).unwrap();
        assert_eq!(result.outcomes.len(), 2);
        assert_eq!(result.outcomes[0].query.line, 8);
        assert_eq!(result.outcomes[0].query.column, 12);
        match &result.outcomes[0].outcome {
            QueryOutcome::Locations { locations, truncated } => {
                assert_eq!(locations.len(), 2);
                assert_eq!(*truncated, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(result.outcomes[1].outcome, QueryOutcome::NotFound);
        assert!(render_resolution(&result).contains("[truncated: 1 more reference(s)]"));
    }

    #[test]
    fn chain_falls_back() {
        let dir = repo();
        let index = FallbackIndex::build(dir.path(), &RepoLayout::default()).unwrap();
        let mut chain = ChainedBackend::new(Box::new(Failing), Box::new(index));
        let defs = chain.definition("a.c", 8, 12).unwrap();
        assert_eq!(defs[0].lines, LineRange::new(1, 4));
    }

    #[test]
    fn no_markers() {
        let dir = repo();
        let blocks = "### a.c\n<<<<<<< SEARCH\n    return x + 1;\n=======\n    return x + 1;\n>>>>>>> REPLACE\n";
        assert!(matches!(plan_queries(dir.path(), blocks), Err(SymbolError::NoMarkersFound)));
    }
}

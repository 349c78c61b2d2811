//! Syntactic model of a target repository.
//!
//! Elements are extracted with a tree-sitter C/C++ grammar, which recovers
//! from locally malformed code instead of failing the whole file.

mod parser;
mod skeleton;
mod snapshot;
mod tree;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parser::{parse_elements, parse_source};
pub use skeleton::{skeletonize, skeletonize_source, SkeletonFile};
pub use snapshot::{snapshot, RepoSnapshot};
pub use tree::{list_source_files, render_repo_tree, RepoTreeView};

pub const DEFAULT_EXTENSIONS: &[&str] = &["c", "h", "cc", "cpp", "cxx", "hpp", "hh"];

/// Directories never listed, indexed, or hashed.
pub const DEFAULT_IGNORE_DIRS: &[&str] = &[".git", ".svn", ".hg", ".vulnresolver"];

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("not a directory: {0}")]
    NotADirectory(String),
    #[error("failed to parse {file}: {reason}")]
    ParseFailure { file: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementKind {
    Class,
    Struct,
    Union,
    Enum,
    Function,
    Macro,
    GlobalVariable,
}

impl ElementKind {
    pub const ALL: [ElementKind; 7] = [
        ElementKind::Class,
        ElementKind::Struct,
        ElementKind::Union,
        ElementKind::Enum,
        ElementKind::Function,
        ElementKind::Macro,
        ElementKind::GlobalVariable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Class => "class",
            ElementKind::Struct => "struct",
            ElementKind::Union => "union",
            ElementKind::Enum => "enum",
            ElementKind::Function => "function",
            ElementKind::Macro => "macro",
            ElementKind::GlobalVariable => "global variable",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inclusive, 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LineRange {
    pub start: usize,
    pub end: usize,
}

impl LineRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start >= 1 && start <= end, "bad range {start}-{end}");
        Self { start, end }
    }

    pub fn contains(&self, line: usize) -> bool {
        self.start <= line && line <= self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for LineRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeElement {
    pub name: String,
    /// Enclosing scope path such as `io::File`, if any.
    pub qualifier: Option<String>,
    pub kind: ElementKind,
    /// Repo-relative path with `/` separators.
    pub file: String,
    pub lines: LineRange,
    pub text: String,
}

impl CodeElement {
    pub fn qualified_name(&self) -> String {
        match &self.qualifier {
            Some(q) => format!("{q}::{}", self.name),
            None => self.name.clone(),
        }
    }

    /// Whether `identifier` names this element. A simple name matches any
    /// scope; `Scope::name` must match the trailing components of the
    /// qualifier.
    pub fn matches_identifier(&self, identifier: &str) -> bool {
        let identifier = identifier.trim();
        match identifier.rsplit_once("::") {
            None => self.name == identifier,
            Some((scope, name)) => {
                let scope = scope.trim_start_matches("::");
                if self.name != name {
                    return false;
                }
                match &self.qualifier {
                    None => scope.is_empty(),
                    Some(q) => q == scope || q.ends_with(&format!("::{scope}")),
                }
            }
        }
    }
}

/// Which files count as source and which directories are skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoLayout {
    pub extensions: Vec<String>,
    pub ignore_dirs: Vec<String>,
}

impl Default for RepoLayout {
    fn default() -> Self {
        Self {
            extensions: DEFAULT_EXTENSIONS.iter().map(|s| s.to_string()).collect(),
            ignore_dirs: DEFAULT_IGNORE_DIRS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl RepoLayout {
    pub fn is_source(&self, path: &str) -> bool {
        match path.rsplit_once('.') {
            Some((stem, ext)) if !stem.is_empty() && !stem.ends_with('/') => self
                .extensions
                .iter()
                .any(|e| e.trim_start_matches('.').eq_ignore_ascii_case(ext)),
            _ => false,
        }
    }

    pub fn is_ignored_dir(&self, name: &str) -> bool {
        self.ignore_dirs.iter().any(|d| d == name)
    }
}

/// Join a repo-relative path onto `root`, refusing paths that escape it.
pub fn resolve_in_repo(root: &Path, rel: &str) -> Result<PathBuf, RepoError> {
    let rel = rel.trim().trim_start_matches("./");
    let candidate = Path::new(rel);
    if rel.is_empty()
        || candidate.is_absolute()
        || candidate
            .components()
            .any(|c| matches!(c, std::path::Component::ParentDir))
    {
        return Err(RepoError::FileNotFound(rel.to_string()));
    }
    Ok(root.join(candidate))
}

/// Read a repo-relative source file as UTF-8.
pub fn read_source(root: &Path, rel: &str) -> Result<String, RepoError> {
    let path = resolve_in_repo(root, rel)?;
    if !path.is_file() {
        return Err(RepoError::FileNotFound(rel.to_string()));
    }
    let bytes = std::fs::read(&path)?;
    String::from_utf8(bytes).map_err(|_| RepoError::ParseFailure {
        file: rel.to_string(),
        reason: "file is not valid UTF-8".into(),
    })
}

/// Normalize a user/model supplied path to the repo-relative form used
/// throughout the crate.
pub fn normalize_rel_path(path: &str) -> String {
    let trimmed = path.trim().trim_matches('`').trim();
    let trimmed = trimmed.strip_prefix("./").unwrap_or(trimmed);
    trimmed.replace('\\', "/")
}

/// Slice of `text` covering `lines` (no trailing newline).
pub fn slice_lines(text: &str, lines: LineRange) -> String {
    let all = crate::text::split_lines(text);
    let end = lines.end.min(all.len());
    if lines.start > end {
        return String::new();
    }
    all[lines.start - 1..end].join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn element(name: &str, qualifier: Option<&str>) -> CodeElement {
        CodeElement {
            name: name.into(),
            qualifier: qualifier.map(str::to_string),
            kind: ElementKind::Function,
            file: "a.cpp".into(),
            lines: LineRange::new(1, 1),
            text: String::new(),
        }
    }

    #[test]
    fn identifier_matching() {
        let method = element("open", Some("io::File"));
        assert!(method.matches_identifier("open"));
        assert!(method.matches_identifier("File::open"));
        assert!(method.matches_identifier("io::File::open"));
        assert!(!method.matches_identifier("Other::open"));
        let free = element("open_file", None);
        assert!(free.matches_identifier("open_file"));
        assert!(free.matches_identifier("::open_file"));
        assert!(!free.matches_identifier("File::open_file"));
    }

    #[test]
    fn layout_source_detection() {
        let layout = RepoLayout::default();
        assert!(layout.is_source("src/buf.c"));
        assert!(layout.is_source("x/file.HPP"));
        assert!(!layout.is_source("README.md"));
        assert!(!layout.is_source("src/.c"));
    }

    #[test]
    fn paths_cannot_escape_root() {
        let root = Path::new("/tmp/repo");
        assert!(resolve_in_repo(root, "../etc/passwd").is_err());
        assert!(resolve_in_repo(root, "/etc/passwd").is_err());
        assert_eq!(resolve_in_repo(root, "./src/a.c").unwrap(), root.join("src/a.c"));
    }
}

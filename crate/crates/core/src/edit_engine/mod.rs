//! SEARCH/REPLACE edits and the project editing toolkit.
//!
//! Edit sets are applied all-or-nothing and recorded as git commits so the
//! agent can roll back one set or everything it applied.

mod apply;
mod blocks;
mod diff;
mod history;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use apply::{apply_to_text, equivalent_modulo_whitespace, locate, LocateError, SearchMatch};
pub use blocks::{parse_edit_blocks, render_edit_blocks};
pub use diff::{diff_stats, to_unified_diff, unified_diff_for_files, DiffStats, FileChange};
pub use history::{ApplyResult, CommitInfo, EditHistory, HistoryView, RollbackResult};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchReplaceEdit {
    pub file: String,
    pub search: String,
    pub replace: String,
}

impl SearchReplaceEdit {
    pub fn new(file: impl Into<String>, search: impl Into<String>, replace: impl Into<String>) -> Self {
        Self { file: file.into(), search: search.into(), replace: replace.into() }
    }

    pub fn is_noop(&self) -> bool {
        equivalent_modulo_whitespace(&self.search, &self.replace)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditSet {
    pub unique_name: String,
    pub edits: Vec<SearchReplaceEdit>,
}

#[derive(Debug, Error)]
pub enum EditError {
    #[error("malformed SEARCH/REPLACE block at byte {offset}: {reason}")]
    MalformedBlock { offset: usize, reason: String },
    #[error("search text not found in {file}")]
    SearchTextNotFound { file: String },
    #[error("search text appears {count} times in {file}; add surrounding lines to make it unique")]
    SearchTextAmbiguous { file: String, count: usize },
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("no changes: every edit leaves its file unchanged")]
    NoChanges,
    #[error("edit set is empty")]
    EmptyEditSet,
    #[error("edit set name must not be empty")]
    EmptyName,
    #[error("empty rollback history")]
    EmptyHistory,
    #[error("git failed ({command}): {stderr}")]
    Git { command: String, stderr: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Unique run/edit names: the first use of `b` keeps it, later uses become
/// `b-2`, `b-3`, ... Names are never handed out twice, even after rollback.
#[derive(Debug, Default, Clone)]
pub struct NameRegistry {
    used: HashSet<String>,
}

impl NameRegistry {
    pub fn claim(&mut self, base: &str) -> String {
        let base = base.trim();
        if self.used.insert(base.to_string()) {
            return base.to_string();
        }
        let mut k = 2;
        loop {
            let candidate = format!("{base}-{k}");
            if self.used.insert(candidate.clone()) {
                return candidate;
            }
            k += 1;
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.used.contains(name)
    }
}

/// Compute the new content of every touched file without writing anything.
/// Edits to one file apply in order. `read` returns `None` for a missing
/// file; an empty search text on a missing file creates it.
pub fn plan_edits(
    edits: &[SearchReplaceEdit],
    mut read: impl FnMut(&str) -> Result<Option<String>, EditError>,
) -> Result<Vec<FileChange>, EditError> {
    let mut changes: Vec<FileChange> = Vec::new();
    for edit in edits {
        let file = crate::repo_model::normalize_rel_path(&edit.file);
        let idx = match changes.iter().position(|c| c.path == file) {
            Some(i) => i,
            None => {
                let before = read(&file)?;
                changes.push(FileChange { path: file.clone(), after: before.clone(), before });
                changes.len() - 1
            }
        };
        let change = &mut changes[idx];
        let new_content = match &change.after {
            None if edit.search.is_empty() => edit.replace.clone(),
            None => return Err(EditError::FileNotFound(file)),
            Some(current) => match apply_to_text(current, &edit.search, &edit.replace) {
                Ok(text) => text,
                Err(LocateError::NotFound) => return Err(EditError::SearchTextNotFound { file }),
                Err(LocateError::Ambiguous(count)) => {
                    return Err(EditError::SearchTextAmbiguous { file, count })
                }
            },
        };
        change.after = Some(new_content);
    }
    changes.retain(|c| c.before != c.after);
    if changes.is_empty() {
        return Err(EditError::NoChanges);
    }
    Ok(changes)
}

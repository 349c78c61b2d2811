use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::{plan_edits, unified_diff_for_files, EditError, NameRegistry, SearchReplaceEdit};
use crate::repo_model::{resolve_in_repo, snapshot, RepoLayout, RepoSnapshot};

const BASE_MESSAGE: &str = "vulnresolver: base";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitInfo {
    pub name: String,
    pub commit_id: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryView {
    pub count: usize,
    pub commits: Vec<CommitInfo>,
    pub latest: Option<CommitInfo>,
}

impl HistoryView {
    pub fn render(&self) -> String {
        let mut out = format!("Commit history: {} commit(s)\n", self.count);
        for (i, c) in self.commits.iter().enumerate() {
            out.push_str(&format!("  {}. {} ({}) {}\n", i + 1, c.name, short(&c.commit_id), c.summary));
        }
        match &self.latest {
            Some(c) => out.push_str(&format!("Latest commit: {} ({})\n", c.name, short(&c.commit_id))),
            None => out.push_str("Latest commit: none\n"),
        }
        out
    }
}

fn short(id: &str) -> &str {
    &id[..id.len().min(10)]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplyResult {
    pub fixed_name: String,
    pub commit_id: String,
    pub diff: String,
    pub history: HistoryView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollbackResult {
    pub reverted: Vec<CommitInfo>,
    pub history: HistoryView,
}

/// Git-backed record of the edit sets applied to one workspace.
#[derive(Debug)]
pub struct EditHistory {
    root: PathBuf,
    layout: RepoLayout,
    base_commit: String,
    base: RepoSnapshot,
    commits: Vec<CommitInfo>,
    names: NameRegistry,
}

fn git(root: &Path, args: &[&str]) -> Result<String, EditError> {
    let output = Command::new("git")
        .arg("-c")
        .arg("commit.gpgsign=false")
        .arg("-c")
        .arg("core.autocrlf=false")
        .arg("-c")
        .arg("init.defaultBranch=main")
        .args(args)
        .current_dir(root)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .env("GIT_AUTHOR_NAME", "vulnresolver")
        .env("GIT_AUTHOR_EMAIL", "vulnresolver@localhost")
        .env("GIT_COMMITTER_NAME", "vulnresolver")
        .env("GIT_COMMITTER_EMAIL", "vulnresolver@localhost")
        .env("GIT_AUTHOR_DATE", "2000-01-01T00:00:00Z")
        .env("GIT_COMMITTER_DATE", "2000-01-01T00:00:00Z")
        .output()?;
    if !output.status.success() {
        return Err(EditError::Git {
            command: format!("git {}", args.join(" ")),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    Ok(String::from_utf8_lossy(&output.stdout).trim().to_string())
}

impl EditHistory {
    /// Start recording edits in `root`, committing its current state as the
    /// base. A repository is initialized when none exists.
    pub fn open(root: &Path, layout: &RepoLayout) -> Result<Self, EditError> {
        if !root.join(".git").exists() {
            git(root, &["init", "-q"])?;
        }
        let exclude = root.join(".git/info/exclude");
        let existing = std::fs::read_to_string(&exclude).unwrap_or_default();
        if !existing.lines().any(|l| l.trim() == "/.vulnresolver/") {
            if let Some(dir) = exclude.parent() {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&exclude, format!("{existing}/.vulnresolver/\n"))?;
        }
        git(root, &["add", "-A"])?;
        git(root, &["commit", "-q", "--allow-empty", "--no-verify", "-m", BASE_MESSAGE])?;
        let base_commit = git(root, &["rev-parse", "HEAD"])?;
        let base = snapshot(root, layout).map_err(|e| EditError::Io(std::io::Error::other(e.to_string())))?;
        Ok(Self {
            root: root.to_path_buf(),
            layout: layout.clone(),
            base_commit,
            base,
            commits: Vec::new(),
            names: NameRegistry::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn base(&self) -> &RepoSnapshot {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.commits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commits.is_empty()
    }

    pub fn view(&self) -> HistoryView {
        HistoryView {
            count: self.commits.len(),
            commits: self.commits.clone(),
            latest: self.commits.last().cloned(),
        }
    }

    /// Apply one edit set atomically and commit it.
    pub fn apply_edits(&mut self, unique_name: &str, edits: &[SearchReplaceEdit]) -> Result<ApplyResult, EditError> {
        if unique_name.trim().is_empty() {
            return Err(EditError::EmptyName);
        }
        if edits.is_empty() {
            return Err(EditError::EmptyEditSet);
        }
        let root = self.root.clone();
        let changes = plan_edits(edits, |rel| {
            let path = resolve_in_repo(&root, rel).map_err(|_| EditError::FileNotFound(rel.to_string()))?;
            match std::fs::read(&path) {
                Ok(bytes) => String::from_utf8(bytes)
                    .map(Some)
                    .map_err(|_| EditError::FileNotFound(rel.to_string())),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e.into()),
            }
        })?;

        let mut written = Vec::new();
        for change in &changes {
            let path = self.root.join(&change.path);
            let result = path
                .parent()
                .map(std::fs::create_dir_all)
                .transpose()
                .and_then(|_| std::fs::write(&path, change.after.as_deref().unwrap_or("")));
            if let Err(e) = result {
                self.restore_after_failure(&written);
                return Err(e.into());
            }
            written.push(change);
        }

        let fixed_name = self.names.claim(unique_name);
        let mut add_args = vec!["add", "-f", "--"];
        add_args.extend(changes.iter().map(|c| c.path.as_str()));
        let commit = git(&self.root, &add_args)
            .and_then(|_| git(&self.root, &["commit", "-q", "--no-verify", "-m", &fixed_name]))
            .and_then(|_| git(&self.root, &["rev-parse", "HEAD"]));
        let commit_id = match commit {
            Ok(id) => id,
            Err(e) => {
                self.restore_after_failure(&written);
                return Err(e);
            }
        };
        let summary = {
            let files: Vec<&str> = changes.iter().map(|c| c.path.as_str()).collect();
            format!("{} edit(s) to {}", edits.len(), files.join(", "))
        };
        self.commits.push(CommitInfo { name: fixed_name.clone(), commit_id: commit_id.clone(), summary });
        Ok(ApplyResult { fixed_name, commit_id, diff: unified_diff_for_files(&changes), history: self.view() })
    }

    fn restore_after_failure(&self, written: &[&super::FileChange]) {
        let _ = git(&self.root, &["reset", "-q", "--hard", "HEAD"]);
        for change in written {
            if change.before.is_none() {
                let _ = std::fs::remove_file(self.root.join(&change.path));
            }
        }
    }

    fn reset_to(&self, commit: &str) -> Result<(), EditError> {
        git(&self.root, &["reset", "-q", "--hard", commit]).map(|_| ())
    }

    pub fn rollback_the_latest_one_edit_set(&mut self) -> Result<RollbackResult, EditError> {
        let Some(last) = self.commits.last().cloned() else {
            return Err(EditError::EmptyHistory);
        };
        let target = match self.commits.len() {
            1 => self.base_commit.clone(),
            n => self.commits[n - 2].commit_id.clone(),
        };
        self.reset_to(&target)?;
        self.commits.pop();
        Ok(RollbackResult { reverted: vec![last], history: self.view() })
    }

    pub fn rollback_all_applied_edits(&mut self) -> Result<RollbackResult, EditError> {
        if self.commits.is_empty() {
            return Err(EditError::EmptyHistory);
        }
        self.reset_to(&self.base_commit.clone())?;
        let reverted = std::mem::take(&mut self.commits);
        Ok(RollbackResult { reverted, history: self.view() })
    }

    /// Digest of the current working tree.
    pub fn current_snapshot(&self) -> Result<RepoSnapshot, EditError> {
        snapshot(&self.root, &self.layout).map_err(|e| EditError::Io(std::io::Error::other(e.to_string())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repo() -> (tempfile::TempDir, EditHistory) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.c"), "int a = 1;\nint b = 2;\n").unwrap();
        let history = EditHistory::open(dir.path(), &RepoLayout::default()).unwrap();
        (dir, history)
    }

    #[test]
    fn apply_and_roll_back() {
        let (_dir, mut h) = repo();
        let base = h.current_snapshot().unwrap();
        let edit = SearchReplaceEdit::new("a.c", "int a = 1;\n", "int a = 3;\n");
        let first = h.apply_edits("instr", std::slice::from_ref(&edit)).unwrap();
        assert_eq!(first.fixed_name, "instr");
        assert_eq!(first.history.count, 1);
        let after_a = h.current_snapshot().unwrap();
        let second = h
            .apply_edits("instr", &[SearchReplaceEdit::new("a.c", "int b = 2;\n", "int b = 4;\n")])
            .unwrap();
        assert_eq!(second.fixed_name, "instr-2");
        h.rollback_the_latest_one_edit_set().unwrap();
        assert_eq!(h.current_snapshot().unwrap(), after_a);
        h.rollback_all_applied_edits().unwrap();
        assert_eq!(h.current_snapshot().unwrap(), base);
        assert!(matches!(h.rollback_all_applied_edits(), Err(EditError::EmptyHistory)));
        assert!(matches!(h.rollback_the_latest_one_edit_set(), Err(EditError::EmptyHistory)));
    }

    #[test]
    fn failures_leave_tree_untouched() {
        let (_dir, mut h) = repo();
        let base = h.current_snapshot().unwrap();
        let edits = [
            SearchReplaceEdit::new("a.c", "int a = 1;\n", "int a = 3;\n"),
            SearchReplaceEdit::new("a.c", "int zzz;\n", "int y;\n"),
        ];
        assert!(matches!(h.apply_edits("x", &edits), Err(EditError::SearchTextNotFound { .. })));
        assert!(matches!(
            h.apply_edits("x", &[SearchReplaceEdit::new("a.c", "int a = 1;\n", "int a = 1;\n")]),
            Err(EditError::NoChanges)
        ));
        assert_eq!(h.current_snapshot().unwrap(), base);
        assert!(h.is_empty());
    }

    #[test]
    fn created_files_disappear_on_rollback() {
        let (dir, mut h) = repo();
        let base = h.current_snapshot().unwrap();
        h.apply_edits("new", &[SearchReplaceEdit::new("sub/n.c", "", "int n;\n")]).unwrap();
        assert!(dir.path().join("sub/n.c").exists());
        h.rollback_the_latest_one_edit_set().unwrap();
        assert!(!dir.path().join("sub/n.c").exists());
        assert_eq!(h.current_snapshot().unwrap().digest, base.digest);
    }
}

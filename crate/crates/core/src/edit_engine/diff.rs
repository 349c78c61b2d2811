use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use similar::TextDiff;
use walkdir::WalkDir;

use crate::repo_model::RepoLayout;

/// Before/after content of one file; `None` means the file does not exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub path: String,
    pub before: Option<String>,
    pub after: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffStats {
    pub files: usize,
    pub hunks: usize,
    pub added: usize,
    pub removed: usize,
}

fn file_diff(out: &mut String, path: &str, before: Option<&str>, after: Option<&str>) {
    if before == after {
        return;
    }
    out.push_str(&format!("diff --git a/{path} b/{path}\n"));
    let (old_header, new_header) = match (before, after) {
        (None, _) => {
            out.push_str("new file mode 100644\n");
            ("/dev/null".to_string(), format!("b/{path}"))
        }
        (_, None) => {
            out.push_str("deleted file mode 100644\n");
            (format!("a/{path}"), "/dev/null".to_string())
        }
        _ => (format!("a/{path}"), format!("b/{path}")),
    };
    let old = before.unwrap_or("");
    let new = after.unwrap_or("");
    let diff = TextDiff::from_lines(old, new);
    let body = diff
        .unified_diff()
        .context_radius(3)
        .header(&old_header, &new_header)
        .to_string();
    out.push_str(&body);
    if !body.ends_with('\n') {
        out.push('\n');
    }
}

/// Git-style unified diff over in-memory changes, files in path order.
pub fn unified_diff_for_files(changes: &[FileChange]) -> String {
    let mut sorted: Vec<&FileChange> = changes.iter().collect();
    sorted.sort_by(|a, b| a.path.cmp(&b.path));
    let mut out = String::new();
    for c in sorted {
        file_diff(&mut out, &c.path, c.before.as_deref(), c.after.as_deref());
    }
    out
}

fn collect(root: &Path, layout: &RepoLayout) -> std::io::Result<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    let walker = WalkDir::new(root).follow_links(false).into_iter().filter_entry(|e| {
        !(e.depth() > 0 && e.file_type().is_dir() && layout.is_ignored_dir(&e.file_name().to_string_lossy()))
    });
    for entry in walker {
        let entry = entry.map_err(std::io::Error::from)?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
            files.insert(rel.to_string_lossy().replace('\\', "/"), std::fs::read(entry.path())?);
        }
    }
    Ok(files)
}

/// Unified diff turning the tree at `before` into the tree at `after`.
pub fn to_unified_diff(before: &Path, after: &Path, layout: &RepoLayout) -> std::io::Result<String> {
    let old = collect(before, layout)?;
    let new = collect(after, layout)?;
    let mut paths: Vec<&String> = old.keys().chain(new.keys()).collect();
    paths.sort();
    paths.dedup();
    let mut out = String::new();
    for path in paths {
        let a = old.get(path);
        let b = new.get(path);
        if a == b {
            continue;
        }
        let a_text = a.map(|bytes| std::str::from_utf8(bytes));
        let b_text = b.map(|bytes| std::str::from_utf8(bytes));
        match (a_text.transpose(), b_text.transpose()) {
            (Ok(x), Ok(y)) => file_diff(&mut out, path, x, y),
            _ => out.push_str(&format!(
                "diff --git a/{path} b/{path}\nBinary files a/{path} and b/{path} differ\n"
            )),
        }
    }
    Ok(out)
}

pub fn diff_stats(diff: &str) -> DiffStats {
    let mut stats = DiffStats::default();
    for line in diff.lines() {
        if line.starts_with("diff --git ") {
            stats.files += 1;
        } else if line.starts_with("@@ ") {
            stats.hunks += 1;
        } else if line.starts_with('+') && !line.starts_with("+++ ") {
            stats.added += 1;
        } else if line.starts_with('-') && !line.starts_with("--- ") {
            stats.removed += 1;
        }
    }
    stats
}

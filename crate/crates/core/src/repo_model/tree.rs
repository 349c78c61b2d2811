use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::{RepoError, RepoLayout};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoTreeView {
    pub text: String,
    pub included_extensions: Vec<String>,
    /// Repo-relative paths of the listed files, sorted.
    pub files: Vec<String>,
}

/// Sorted repo-relative paths of every source file under `root`.
pub fn list_source_files(root: &Path, layout: &RepoLayout) -> Result<Vec<String>, RepoError> {
    if !root.is_dir() {
        return Err(RepoError::NotADirectory(root.display().to_string()));
    }
    let mut files = Vec::new();
    let walker = WalkDir::new(root).follow_links(false).into_iter().filter_entry(|e| {
        !(e.depth() > 0 && e.file_type().is_dir() && layout.is_ignored_dir(&e.file_name().to_string_lossy()))
    });
    for entry in walker {
        let entry = entry.map_err(|e| RepoError::Io(e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let rel = rel.to_string_lossy().replace('\\', "/");
        if layout.is_source(&rel) {
            files.push(rel);
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Default)]
struct Dir {
    dirs: BTreeMap<String, Dir>,
    files: Vec<String>,
}

impl Dir {
    fn insert(&mut self, parts: &[&str]) {
        match parts {
            [] => {}
            [file] => self.files.push(file.to_string()),
            [dir, rest @ ..] => self.dirs.entry(dir.to_string()).or_default().insert(rest),
        }
    }

    fn render(&self, depth: usize, out: &mut String) {
        // Directories and files interleave in one lexicographic order.
        let mut entries: Vec<(&str, Option<&Dir>)> = self
            .dirs
            .iter()
            .map(|(name, dir)| (name.as_str(), Some(dir)))
            .chain(self.files.iter().map(|f| (f.as_str(), None)))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        for (name, dir) in entries {
            out.push_str(&"  ".repeat(depth));
            out.push_str(name);
            match dir {
                Some(d) => {
                    out.push_str("/\n");
                    d.render(depth + 1, out);
                }
                None => out.push('\n'),
            }
        }
    }
}

/// `tree`-like listing of the source files under `root`.
pub fn render_repo_tree(root: &Path, layout: &RepoLayout) -> Result<RepoTreeView, RepoError> {
    let files = list_source_files(root, layout)?;
    let mut tree = Dir::default();
    for file in &files {
        let parts: Vec<&str> = file.split('/').collect();
        tree.insert(&parts);
    }
    let root_name = root
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| ".".to_string());
    let mut text = format!("{root_name}/\n");
    tree.render(1, &mut text);
    Ok(RepoTreeView {
        text,
        included_extensions: layout.extensions.clone(),
        files,
    })
}

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use super::{RepoError, RepoLayout};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepoSnapshot {
    pub digest: String,
    pub file_count: usize,
}

/// Content digest over every file under `root` (any extension), skipping the
/// layout's ignore directories. Timestamps and permissions do not matter.
pub fn snapshot(root: &Path, layout: &RepoLayout) -> Result<RepoSnapshot, RepoError> {
    if !root.is_dir() {
        return Err(RepoError::NotADirectory(root.display().to_string()));
    }
    let mut files = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| !(e.depth() > 0 && e.file_type().is_dir() && layout.is_ignored_dir(&e.file_name().to_string_lossy())));
    for entry in walker {
        let entry = entry.map_err(|e| RepoError::Io(e.into()))?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
            let rel = rel.to_string_lossy().replace('\\', "/");
            files.push((rel, entry.into_path()));
        }
    }
    files.sort();
    let mut hasher = Sha256::new();
    for (rel, path) in &files {
        let bytes = std::fs::read(path)?;
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(RepoSnapshot { digest: hex::encode(hasher.finalize()), file_count: files.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_only_hashing() {
        let dir = tempfile::tempdir().unwrap();
        let layout = RepoLayout::default();
        std::fs::create_dir(dir.path().join("src")).unwrap();
        std::fs::write(dir.path().join("src/a.c"), "int a;\n").unwrap();
        let first = snapshot(dir.path(), &layout).unwrap();
        std::fs::write(dir.path().join("src/a.c"), "int a;\n").unwrap();
        assert_eq!(first, snapshot(dir.path(), &layout).unwrap());
        std::fs::create_dir(dir.path().join(".git")).unwrap();
        std::fs::write(dir.path().join(".git/HEAD"), "x").unwrap();
        assert_eq!(first, snapshot(dir.path(), &layout).unwrap());
        std::fs::write(dir.path().join("src/a.c"), "int a;\n\n").unwrap();
        assert_ne!(first, snapshot(dir.path(), &layout).unwrap());
    }

    #[test]
    fn rejects_files() {
        let file = tempfile::NamedTempFile::new().unwrap();
        assert!(matches!(
            snapshot(file.path(), &RepoLayout::default()),
            Err(RepoError::NotADirectory(_))
        ));
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parser::extract, read_source, RepoError};

const PLACEHOLDER: &str = "{ ... }";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonFile {
    pub file: String,
    pub text: String,
}

/// Skeleton of a repo-relative file: every function body becomes `{ ... }`.
pub fn skeletonize(root: &Path, file: &str) -> Result<SkeletonFile, RepoError> {
    let source = read_source(root, file)?;
    skeletonize_source(file, &source)
}

pub fn skeletonize_source(file: &str, source: &str) -> Result<SkeletonFile, RepoError> {
    let extraction = extract(file, source)?;
    let mut text = String::with_capacity(source.len());
    let mut cursor = 0;
    for body in &extraction.bodies {
        if body.start < cursor || body.len() <= PLACEHOLDER.len() {
            continue;
        }
        text.push_str(&source[cursor..body.start]);
        text.push_str(PLACEHOLDER);
        cursor = body.end;
    }
    text.push_str(&source[cursor..]);
    Ok(SkeletonFile { file: file.to_string(), text })
}

//! Two-step vulnerability localization: suspicious files from prompting and
//! embedding retrieval, then suspicious code elements from file skeletons.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agents::PromptTemplate;
use crate::harness::embed::{cosine, EmbedError, Embedder};
use crate::harness::llm::{ChatRequest, LlmBackend, LlmError, Message};
use crate::repo_model::{
    list_source_files, normalize_rel_path, parse_elements, read_source, skeletonize, LineRange, RepoError, RepoLayout,
};

pub const LOCALIZE_FILES_CALLER: &str = "localize_files";
pub const IGNORE_FOLDERS_CALLER: &str = "ignore_folders";
pub const LOCALIZE_ELEMENTS_CALLER: &str = "localize_elements";
pub const DEFAULT_TOP_N: usize = 3;
pub const DEFAULT_CHUNK_LINES: usize = 512;

#[derive(Debug, Error)]
pub enum LocalizationError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error("no suspicious files to localize elements in")]
    NoFiles,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub file: String,
    pub index: usize,
    pub text: String,
    pub lines: LineRange,
}

/// Consecutive non-overlapping chunks of `chunk_lines` lines. Their texts
/// concatenate back to `text`.
pub fn chunk_file(file: &str, text: &str, chunk_lines: usize) -> Vec<Chunk> {
    assert!(chunk_lines > 0, "chunk size must be positive");
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    lines
        .chunks(chunk_lines)
        .enumerate()
        .map(|(index, group)| {
            let start = index * chunk_lines + 1;
            Chunk { file: file.to_string(), index, text: group.concat(), lines: LineRange::new(start, start + group.len() - 1) }
        })
        .collect()
}

/// Prompt-ranked files first, then retrieval-only files; first occurrence wins.
pub fn merge_file_lists(prompt_files: &[String], retrieval_files: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    prompt_files.iter().chain(retrieval_files).filter(|f| seen.insert(f.as_str())).cloned().collect()
}

/// Content of the last fenced block, or the whole text when there is none.
fn fenced_body(text: &str) -> &str {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?s)```[^\n]*\n(.*?)```").unwrap());
    re.captures_iter(text).last().map_or(text, |c| c.get(1).unwrap().as_str())
}

fn listed_paths(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let bullet = RE.get_or_init(|| Regex::new(r"^\s*(?:[-*+]\s+|\d+[.)]\s+)?").unwrap());
    fenced_body(text)
        .lines()
        .map(|l| normalize_rel_path(bullet.replace(l, "").trim()))
        .filter(|l| !l.is_empty())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRanking {
    pub files: Vec<String>,
    pub dropped: Vec<String>,
}

/// Ask the model for the top `n` files to edit. Paths that are not source
/// files of the repository are dropped.
pub fn localize_files_prompt(
    report: &str,
    repo_tree: &str,
    root: &Path,
    layout: &RepoLayout,
    llm: &dyn LlmBackend,
    n: usize,
) -> Result<PromptRanking, LocalizationError> {
    let prompt = PromptTemplate::LocalizeFiles.render(&[
        ("issue_report", report),
        ("repo_structure", repo_tree),
        ("n", &n.to_string()),
    ]);
    let response = llm.complete(&ChatRequest::new(LOCALIZE_FILES_CALLER, vec![Message::user(prompt)], 0.0))?;
    let known: BTreeSet<String> = list_source_files(root, layout)?.into_iter().collect();
    let mut ranking = PromptRanking::default();
    for path in listed_paths(&response.content) {
        if !known.contains(&path) {
            log::warn!("file localization named '{path}', which is not a source file of the repository");
            ranking.dropped.push(path);
        } else if !ranking.files.contains(&path) && ranking.files.len() < n {
            ranking.files.push(path);
        }
    }
    Ok(ranking)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileScore {
    pub file: String,
    pub score: f64,
    pub best_chunk: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRanking {
    pub ignored_folders: Vec<String>,
    pub candidates: usize,
    pub chunks: usize,
    /// Every scored file, best first.
    pub scores: Vec<FileScore>,
    pub files: Vec<String>,
}

fn is_under(file: &str, folder: &str) -> bool {
    folder.is_empty() || file.strip_prefix(folder).is_some_and(|rest| rest.starts_with('/'))
}

/// Order files by their best chunk similarity, descending, ties by path.
pub fn rank_by_chunks(chunks: &[Chunk], chunk_vectors: &[Vec<f64>], query: &[f64]) -> Vec<FileScore> {
    let mut best: Vec<FileScore> = Vec::new();
    for (chunk, v) in chunks.iter().zip(chunk_vectors) {
        let score = cosine(query, v);
        match best.iter_mut().find(|s| s.file == chunk.file) {
            Some(s) if score > s.score => {
                s.score = score;
                s.best_chunk = chunk.index;
            }
            Some(_) => {}
            None => best.push(FileScore { file: chunk.file.clone(), score, best_chunk: chunk.index }),
        }
    }
    best.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.file.cmp(&b.file)));
    best
}

/// Ask the model which folders to ignore, then rank the remaining files by
/// embedding similarity between the report and their chunks.
#[allow(clippy::too_many_arguments)]
pub fn localize_files_retrieval(
    report: &str,
    repo_tree: &str,
    root: &Path,
    layout: &RepoLayout,
    llm: &dyn LlmBackend,
    embedder: &dyn Embedder,
    n: usize,
    chunk_lines: usize,
) -> Result<RetrievalRanking, LocalizationError> {
    let prompt = PromptTemplate::IgnoreFolders.render(&[("issue_report", report), ("repo_structure", repo_tree)]);
    let response = llm.complete(&ChatRequest::new(IGNORE_FOLDERS_CALLER, vec![Message::user(prompt)], 0.0))?;
    let ignored_folders: Vec<String> = listed_paths(&response.content)
        .into_iter()
        .map(|f| f.trim_end_matches('/').to_string())
        .collect();
    let files: Vec<String> = list_source_files(root, layout)?
        .into_iter()
        .filter(|f| !ignored_folders.iter().any(|d| is_under(f, d)))
        .collect();
    let mut chunks = Vec::new();
    for f in &files {
        chunks.extend(chunk_file(f, &read_source(root, f)?, chunk_lines));
    }
    let mut ranking = RetrievalRanking { ignored_folders, candidates: files.len(), chunks: chunks.len(), ..Default::default() };
    if chunks.is_empty() {
        return Ok(ranking);
    }
    let mut texts = Vec::with_capacity(chunks.len() + 1);
    texts.push(report.to_string());
    texts.extend(chunks.iter().map(|c| c.text.clone()));
    let mut vectors = embedder.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(EmbedError(format!("expected {} vectors, got {}", texts.len(), vectors.len())).into());
    }
    let query = vectors.remove(0);
    ranking.scores = rank_by_chunks(&chunks, &vectors, &query);
    ranking.files = ranking.scores.iter().take(n).map(|s| s.file.clone()).collect();
    Ok(ranking)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ElementRef {
    pub file: String,
    pub id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementLocalization {
    pub refs: Vec<ElementRef>,
    pub dropped: Vec<ElementRef>,
    /// Set when the model returned nothing usable.
    pub flagged: bool,
    pub parse_error: Option<String>,
}

fn parse_element_list(text: &str) -> Result<Vec<ElementRef>, String> {
    let body = fenced_body(text);
    let json = match (body.find('['), body.rfind(']')) {
        (Some(a), Some(b)) if a < b => &body[a..=b],
        _ => return Err("no JSON list found".into()),
    };
    let value: Value = serde_json::from_str(json).map_err(|e| format!("invalid JSON: {e}"))?;
    let items = value.as_array().ok_or("the JSON value is not a list")?;
    let mut refs = Vec::new();
    for item in items {
        let field = |k: &str| item.get(k).and_then(Value::as_str).map(str::trim);
        match (field("file"), field("id").or_else(|| field("name"))) {
            (Some(file), Some(id)) if !file.is_empty() && !id.is_empty() => {
                refs.push(ElementRef { file: normalize_rel_path(file), id: id.trim_matches('`').to_string() })
            }
            _ => return Err(format!("list item {item} lacks string 'file' and 'id' fields")),
        }
    }
    Ok(refs)
}

fn render_skeletons(root: &Path, files: &[String]) -> Result<String, LocalizationError> {
    let mut out = String::new();
    for f in files {
        let skeleton = skeletonize(root, f)?;
        out.push_str(&format!("### {f}\n```\n{}", skeleton.text));
        if !skeleton.text.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("```\n\n");
    }
    Ok(out)
}

/// Ask the model for suspicious elements in `files` and keep the ones that
/// exist.
pub fn localize_elements(
    files: &[String],
    report: &str,
    root: &Path,
    llm: &dyn LlmBackend,
) -> Result<ElementLocalization, LocalizationError> {
    if files.is_empty() {
        return Err(LocalizationError::NoFiles);
    }
    let prompt = PromptTemplate::LocalizeElements.render(&[("issue_report", report), ("skeletons", &render_skeletons(root, files)?)]);
    let mut messages = vec![Message::user(prompt)];
    let response = llm.complete(&ChatRequest::new(LOCALIZE_ELEMENTS_CALLER, messages.clone(), 0.0))?;
    let parsed = match parse_element_list(&response.content) {
        Ok(refs) => Ok(refs),
        Err(first) => {
            messages.push(Message::assistant(&response.content, Vec::new()));
            messages.push(Message::user(format!(
                "Your answer could not be parsed ({first}). Reply with only the JSON list of {{\"file\", \"id\"}} objects, wrapped with ```json"
            )));
            let retry = llm.complete(&ChatRequest::new(LOCALIZE_ELEMENTS_CALLER, messages, 0.0))?;
            parse_element_list(&retry.content)
        }
    };
    let refs = match parsed {
        Ok(refs) => refs,
        Err(e) => return Ok(ElementLocalization { flagged: true, parse_error: Some(e), ..Default::default() }),
    };
    let mut out = ElementLocalization::default();
    for r in refs {
        let exists = match parse_elements(root, &r.file) {
            Ok(elements) => elements.iter().any(|e| e.matches_identifier(&r.id)),
            Err(_) => false,
        };
        if !exists {
            log::warn!("dropping nonexistent element {}:{}", r.file, r.id);
            out.dropped.push(r);
        } else if !out.refs.contains(&r) {
            out.refs.push(r);
        }
    }
    out.flagged = out.refs.is_empty();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn merge_rules() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(merge_file_lists(&s(&["a", "b"]), &s(&["b", "c"])), s(&["a", "b", "c"]));
        assert_eq!(merge_file_lists(&[], &s(&["x"])), s(&["x"]));
        assert_eq!(merge_file_lists(&s(&["a"]), &s(&["a"])), s(&["a"]));
    }

    #[test]
    fn path_lists() {
        let text = "Here you go:\n```\n1. src/buf.c\n- ./src/main.c\n\n`bogus.c`\n```\n";
        assert_eq!(listed_paths(text), vec!["src/buf.c", "src/main.c", "bogus.c"]);
        assert!(is_under("tests/a.c", "tests"));
        assert!(!is_under("tests2/a.c", "tests"));
    }

    #[test]
    fn element_lists() {
        let refs = parse_element_list("```json\n[{\"file\": \"src/buf.c\", \"id\": \"copy_name\"}]\n```").unwrap();
        assert_eq!(refs, vec![ElementRef { file: "src/buf.c".into(), id: "copy_name".into() }]);
        assert!(parse_element_list("no list").is_err());
        assert!(parse_element_list("[{\"file\": 3}]").is_err());
        assert_eq!(parse_element_list("[]").unwrap(), vec![]);
    }

    proptest! {
        #[test]
        fn chunks_partition_lines(lines in prop::collection::vec("[a-z ]{0,5}", 0..60), size in 1usize..9, trailing in any::<bool>()) {
            let mut text = lines.join("\n");
            if trailing && !text.is_empty() {
                text.push('\n');
            }
            let chunks = chunk_file("f.c", &text, size);
            let total = text.split_inclusive('\n').count();
            prop_assert_eq!(chunks.len(), total.div_ceil(size));
            prop_assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), text);
            let mut next = 1;
            for c in &chunks {
                prop_assert_eq!(c.lines.start, next);
                next = c.lines.end + 1;
            }
        }
    }
}

//! Patch generation over localized elements and PoC-gated majority voting.

mod normalize;
mod select;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use normalize::{collapse_whitespace, format_tokens, strip_comments, Fingerprint, Normalizer};
pub use select::{select_patch, Selection, SelectionStrategy, VoteGroup};

use crate::agents::PromptTemplate;
use crate::edit_engine::{parse_edit_blocks, plan_edits, unified_diff_for_files, EditError, EditHistory, FileChange, SearchReplaceEdit};
use crate::execution::{ExecError, PoCRunResult, PocPhase, PocToolkit};
use crate::harness::llm::{ChatRequest, LlmBackend, LlmError, Message};
use crate::localization::ElementRef;
use crate::repo_model::{parse_elements, read_source, resolve_in_repo, LineRange, RepoError};

pub const GENERATION_CALLER: &str = "generation";
pub const DEFAULT_MARGIN: usize = 10;
pub const DEFAULT_CANDIDATES: usize = 5;

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("element {id} no longer exists in {file}")]
    ElementVanished { file: String, id: String },
    #[error("workspace is not at its base state before validating candidate {0}")]
    DirtyWorkspace(usize),
    #[error("workspace was not restored after validating candidate {0}")]
    RestoreFailed(usize),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Edit(#[from] EditError),
}

/// Sampling temperature of candidate `index`: greedy first, then sampling.
pub fn candidate_temperature(index: usize) -> f64 {
    if index == 0 {
        0.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub file: String,
    pub lines: LineRange,
    /// Lines covered by the localized elements themselves.
    pub element_lines: Vec<LineRange>,
    pub elements: Vec<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchContext {
    pub windows: Vec<ContextWindow>,
    pub rendered: String,
}

/// Extract every referenced element with `margin` lines around it. Windows
/// are grouped per file in localization order; overlapping or adjacent
/// windows in one file are merged.
pub fn build_patch_context(refs: &[ElementRef], root: &Path, margin: usize) -> Result<PatchContext, RepairError> {
    let mut per_file: Vec<(String, Vec<(LineRange, String)>)> = Vec::new();
    for r in refs {
        let vanished = || RepairError::ElementVanished { file: r.file.clone(), id: r.id.clone() };
        let elements = parse_elements(root, &r.file).map_err(|_| vanished())?;
        let matching: Vec<_> = elements.iter().filter(|e| e.matches_identifier(&r.id)).collect();
        if matching.is_empty() {
            return Err(vanished());
        }
        let idx = match per_file.iter().position(|(f, _)| f == &r.file) {
            Some(i) => i,
            None => {
                per_file.push((r.file.clone(), Vec::new()));
                per_file.len() - 1
            }
        };
        for e in matching {
            if !per_file[idx].1.iter().any(|(l, id)| *l == e.lines && id == &r.id) {
                per_file[idx].1.push((e.lines, r.id.clone()));
            }
        }
    }

    let mut windows = Vec::new();
    for (file, mut spans) in per_file {
        let text = read_source(root, &file)?;
        let lines = crate::text::split_lines(&text);
        let total = lines.len().max(1);
        spans.sort_by_key(|(l, _)| (l.start, l.end));
        let mut merged: Vec<ContextWindow> = Vec::new();
        for (span, id) in spans {
            let start = span.start.saturating_sub(margin).max(1);
            let end = (span.end + margin).min(total);
            match merged.last_mut() {
                Some(w) if start <= w.lines.end + 1 => {
                    w.lines.end = w.lines.end.max(end);
                    w.element_lines.push(span);
                    if !w.elements.contains(&id) {
                        w.elements.push(id);
                    }
                }
                _ => merged.push(ContextWindow {
                    file: file.clone(),
                    lines: LineRange::new(start, end),
                    element_lines: vec![span],
                    elements: vec![id],
                    text: String::new(),
                }),
            }
        }
        for mut w in merged {
            let end = w.lines.end.min(lines.len());
            w.text = if w.lines.start <= end { lines[w.lines.start - 1..end].join("\n") } else { String::new() };
            windows.push(w);
        }
    }
    let rendered = windows
        .iter()
        .map(|w| format!("### {}\n```\n{}\n```\n", w.file, w.text))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(PatchContext { windows, rendered })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchCandidate {
    pub index: usize,
    pub temperature: f64,
    pub raw: String,
    pub edits: Vec<SearchReplaceEdit>,
    pub parse_error: Option<String>,
    /// The edits apply cleanly to the base workspace.
    pub applied: bool,
    pub apply_error: Option<String>,
    pub poc_pass: Option<bool>,
    pub poc: Option<PoCRunResult>,
    pub fingerprint: Option<String>,
    pub normalization_fallback: bool,
    pub diff: Option<String>,
}

impl PatchCandidate {
    pub fn empty(index: usize, temperature: f64) -> Self {
        Self {
            index,
            temperature,
            raw: String::new(),
            edits: Vec::new(),
            parse_error: None,
            applied: false,
            apply_error: None,
            poc_pass: None,
            poc: None,
            fingerprint: None,
            normalization_fallback: false,
            diff: None,
        }
    }
}

/// Request `t` SEARCH/REPLACE patches for the context.
pub fn generate_patches(report: &str, context: &PatchContext, llm: &dyn LlmBackend, t: usize) -> Result<Vec<PatchCandidate>, RepairError> {
    let prompt = PromptTemplate::Generation.render(&[("issue_report", report), ("context", &context.rendered)]);
    let mut candidates = Vec::with_capacity(t);
    for index in 0..t {
        let temperature = candidate_temperature(index);
        let response = llm.complete(&ChatRequest::new(GENERATION_CALLER, vec![Message::user(prompt.clone())], temperature))?;
        let mut candidate = PatchCandidate::empty(index, temperature);
        match parse_edit_blocks(&response.content) {
            Ok(edits) if !edits.is_empty() => candidate.edits = edits,
            Ok(_) => candidate.parse_error = Some("no SEARCH/REPLACE blocks found".into()),
            Err(e) => candidate.parse_error = Some(e.to_string()),
        }
        candidate.raw = response.content;
        candidates.push(candidate);
    }
    Ok(candidates)
}

fn plan_against(root: &Path, edits: &[SearchReplaceEdit]) -> Result<Vec<FileChange>, EditError> {
    plan_edits(edits, |rel| {
        let path = resolve_in_repo(root, rel).map_err(|_| EditError::FileNotFound(rel.to_string()))?;
        match std::fs::read(&path) {
            Ok(bytes) => String::from_utf8(bytes).map(Some).map_err(|_| EditError::FileNotFound(rel.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    })
}

/// Check that the edits apply to the workspace at `root` and compute the
/// resulting diff and fingerprint. Nothing is written.
pub fn prepare_candidate(candidate: &mut PatchCandidate, root: &Path, normalizer: &Normalizer) {
    if candidate.edits.is_empty() {
        return;
    }
    match plan_against(root, &candidate.edits) {
        Ok(changes) => {
            let fp = normalizer.fingerprint(&changes);
            candidate.applied = true;
            candidate.apply_error = None;
            candidate.diff = Some(unified_diff_for_files(&changes));
            candidate.fingerprint = Some(fp.digest);
            candidate.normalization_fallback = fp.fallback;
        }
        Err(e) => {
            candidate.applied = false;
            candidate.apply_error = Some(e.to_string());
            candidate.fingerprint = None;
            candidate.diff = None;
        }
    }
}

/// Apply the candidate, compile and run the PoC, then roll back. A
/// candidate passes when it compiles, finishes in time and triggers no
/// sanitizer report.
pub fn validate_candidate(candidate: &mut PatchCandidate, history: &mut EditHistory, poc: &PocToolkit) -> Result<(), RepairError> {
    if candidate.edits.is_empty() || !candidate.applied {
        candidate.poc_pass = Some(false);
        return Ok(());
    }
    let base = history.base().digest.clone();
    if history.current_snapshot()?.digest != base {
        return Err(RepairError::DirtyWorkspace(candidate.index));
    }
    match history.apply_edits(&format!("candidate-{}", candidate.index), &candidate.edits) {
        Ok(_) => {}
        Err(EditError::Git { command, stderr }) => return Err(EditError::Git { command, stderr }.into()),
        Err(e) => {
            candidate.applied = false;
            candidate.apply_error = Some(e.to_string());
            candidate.poc_pass = Some(false);
            return Ok(());
        }
    }
    let run = poc.run_poc(&format!("candidate-{}", candidate.index));
    history.rollback_the_latest_one_edit_set()?;
    if history.current_snapshot()?.digest != base {
        return Err(RepairError::RestoreFailed(candidate.index));
    }
    let run = run?;
    candidate.poc_pass = Some(run.phase == PocPhase::Ran && !run.timed_out && !run.sanitizer_triggered);
    candidate.poc = Some(run);
    Ok(())
}

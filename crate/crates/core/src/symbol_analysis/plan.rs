use std::path::Path;

use similar::{DiffOp, TextDiff};

use super::{MarkerKind, MarkerQuery, SymbolError};
use crate::edit_engine::{locate, parse_edit_blocks, EditError, LocateError};
use crate::repo_model::read_source;
use crate::text::{is_ident_byte, is_identifier, offset_to_position, split_lines, word_occurrences};

const WRAPPERS: [(&str, MarkerKind); 2] = [
    ("FIND_DEFINITION", MarkerKind::Definition),
    ("FIND_REFERENCES", MarkerKind::References),
];

/// One wrapper found in a REPLACE body, positioned in the stripped text.
#[derive(Debug, Clone, PartialEq, Eq)]
struct StrippedMarker {
    kind: MarkerKind,
    symbol: String,
    offset: usize,
}

/// Remove `FIND_*(x)` wrappers from `replace`, returning the text as it would
/// read without them plus where each wrapped identifier ends up.
fn strip_markers(replace: &str) -> Result<(String, Vec<StrippedMarker>), String> {
    let bytes = replace.as_bytes();
    let mut out = String::with_capacity(replace.len());
    let mut markers = Vec::new();
    let mut i = 0;
    let mut copied = 0;
    while i < bytes.len() {
        let found = WRAPPERS.iter().find(|(w, _)| {
            replace[i..].starts_with(w) && (i == 0 || !is_ident_byte(bytes[i - 1]))
        });
        let Some((wrapper, kind)) = found else {
            i += 1;
            continue;
        };
        let mut j = i + wrapper.len();
        while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
            j += 1;
        }
        if j >= bytes.len() || bytes[j] != b'(' {
            i += wrapper.len();
            continue;
        }
        let open = j;
        let mut depth = 0usize;
        let mut close = None;
        for (k, &b) in bytes.iter().enumerate().skip(open) {
            match b {
                b'(' => depth += 1,
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(k);
                        break;
                    }
                }
                b'\n' => break,
                _ => {}
            }
        }
        let Some(close) = close else {
            return Err(format!("unbalanced parentheses after {wrapper} at byte {i} of REPLACE"));
        };
        let inner = &replace[open + 1..close];
        let symbol = inner.trim();
        if !is_identifier(symbol) {
            return Err(format!("{wrapper} must wrap a single identifier, found '{inner}'"));
        }
        out.push_str(&replace[copied..i]);
        markers.push(StrippedMarker { kind: *kind, symbol: symbol.to_string(), offset: out.len() });
        out.push_str(symbol);
        i = close + 1;
        copied = i;
    }
    out.push_str(&replace[copied..]);
    Ok((out, markers))
}

/// Map a byte offset in `new` back to `old` through a character alignment.
fn align_offset(old: &str, new: &str, new_offset: usize) -> Option<usize> {
    if old == new {
        return Some(new_offset);
    }
    let diff = TextDiff::from_chars(old, new);
    let old_chars: Vec<usize> = old.char_indices().map(|(b, _)| b).collect();
    let new_chars: Vec<usize> = new.char_indices().map(|(b, _)| b).collect();
    let target = new_chars.iter().position(|&b| b == new_offset)?;
    for op in diff.ops() {
        if let DiffOp::Equal { old_index, new_index, len } = *op {
            if (new_index..new_index + len).contains(&target) {
                return old_chars.get(old_index + (target - new_index)).copied();
            }
        }
    }
    None
}

/// Offset of `marker` within `search`: character alignment first, then the
/// same-numbered whole-word occurrence.
fn offset_in_search(search: &str, stripped: &str, marker: &StrippedMarker) -> Option<usize> {
    let sym = &marker.symbol;
    if let Some(off) = align_offset(search, stripped, marker.offset) {
        if word_occurrences(search, sym).contains(&off) {
            return Some(off);
        }
    }
    let k = word_occurrences(stripped, sym).iter().position(|&o| o == marker.offset)?;
    word_occurrences(search, sym).get(k).copied()
}

/// Compute the original-file coordinates of every marker in `edit_blocks`.
/// Nothing is written to the repository.
pub fn plan_queries(root: &Path, edit_blocks: &str) -> Result<Vec<MarkerQuery>, SymbolError> {
    let edits = parse_edit_blocks(edit_blocks).map_err(|e| match e {
        EditError::MalformedBlock { offset, reason } => SymbolError::MalformedBlock { offset, reason },
        other => SymbolError::MalformedBlock { offset: 0, reason: other.to_string() },
    })?;
    let mut queries = Vec::new();
    let mut block_offsets = edit_block_offsets(edit_blocks).into_iter();
    for edit in &edits {
        let block_offset = block_offsets.next().unwrap_or(0);
        let (stripped, markers) = strip_markers(&edit.replace)
            .map_err(|reason| SymbolError::MalformedBlock { offset: block_offset, reason })?;
        if markers.is_empty() {
            continue;
        }
        let content = read_source(root, &edit.file).map_err(|_| SymbolError::FileNotFound(edit.file.clone()))?;
        let found = locate(&content, &edit.search).map_err(|e| match e {
            LocateError::NotFound => SymbolError::SearchTextNotFound { file: edit.file.clone() },
            LocateError::Ambiguous(count) => SymbolError::SearchTextAmbiguous { file: edit.file.clone(), count },
        })?;
        for marker in &markers {
            let search_offset = offset_in_search(&edit.search, &stripped, marker).ok_or_else(|| {
                SymbolError::MalformedBlock {
                    offset: block_offset,
                    reason: format!("marked symbol '{}' does not occur in the SEARCH text", marker.symbol),
                }
            })?;
            let file_offset = if found.normalized {
                map_normalized(&content, found.start, &edit.search, search_offset, &marker.symbol)
            } else {
                Some(found.start + search_offset)
            };
            let file_offset = file_offset.ok_or_else(|| SymbolError::MalformedBlock {
                offset: block_offset,
                reason: format!("could not map '{}' back to {}", marker.symbol, edit.file),
            })?;
            let (line, column) = offset_to_position(&content, file_offset);
            queries.push(MarkerQuery {
                kind: marker.kind,
                symbol: marker.symbol.clone(),
                file: edit.file.clone(),
                line,
                column,
            });
        }
    }
    if queries.is_empty() {
        return Err(SymbolError::NoMarkersFound);
    }
    Ok(queries)
}

/// With a whitespace-normalized match, the search maps line-by-line onto
/// the file; within a line, take the same-numbered occurrence of the symbol.
fn map_normalized(content: &str, match_start: usize, search: &str, search_offset: usize, sym: &str) -> Option<usize> {
    let (search_line, _) = offset_to_position(search, search_offset);
    let search_lines = split_lines(search);
    let line_text = search_lines.get(search_line - 1)?;
    let line_start = search[..search_offset].rfind('\n').map_or(0, |p| p + 1);
    let k = word_occurrences(line_text, sym).iter().position(|&o| line_start + o == search_offset)?;
    let (first_line, _) = offset_to_position(content, match_start);
    let target_line = first_line + search_line - 1;
    let file_line_start = crate::text::line_starts(content).get(target_line - 1).copied()?;
    let file_line = split_lines(content).get(target_line - 1).copied()?;
    word_occurrences(file_line, sym).get(k).map(|o| file_line_start + o)
}

/// Byte offset of each block's `### path` header, for error reporting.
fn edit_block_offsets(text: &str) -> Vec<usize> {
    let mut offsets = Vec::new();
    let mut offset = 0;
    let mut header = 0;
    for line in text.split_inclusive('\n') {
        if line.starts_with("### ") {
            header = offset;
        } else if line.trim_end().ends_with("SEARCH") && line.starts_with("<<<<<<") {
            offsets.push(header);
        }
        offset += line.len();
    }
    offsets
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_records_positions() {
        let (text, markers) = strip_markers("a = FIND_DEFINITION( foo ) + FIND_REFERENCES(bar);\n").unwrap();
        assert_eq!(text, "a = foo + bar;\n");
        assert_eq!(markers[0].offset, 4);
        assert_eq!(markers[1].offset, 10);
        assert_eq!(markers[1].kind, MarkerKind::References);
    }

    #[test]
    fn expressions_are_rejected() {
        assert!(strip_markers("FIND_DEFINITION(a->b)").is_err());
        assert!(strip_markers("FIND_DEFINITION(a").is_err());
        let (text, markers) = strip_markers("MY_FIND_DEFINITION(x)").unwrap();
        assert_eq!(text, "MY_FIND_DEFINITION(x)");
        assert!(markers.is_empty());
    }

    #[test]
    fn alignment_survives_small_drift() {
        let search = "    uint32_t    index;\n";
        let stripped = "    uint32_t index;\n";
        let m = StrippedMarker { kind: MarkerKind::References, symbol: "index".into(), offset: 13 };
        assert_eq!(offset_in_search(search, stripped, &m), Some(16));
    }
}

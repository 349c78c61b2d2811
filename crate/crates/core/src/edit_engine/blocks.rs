use std::sync::OnceLock;

use regex::Regex;

use super::{EditError, SearchReplaceEdit};

struct Markers {
    search: Regex,
    divider: Regex,
    replace: Regex,
    header: Regex,
}

fn markers() -> &'static Markers {
    static M: OnceLock<Markers> = OnceLock::new();
    M.get_or_init(|| Markers {
        search: Regex::new(r"^<{6,}\s*SEARCH\s*$").unwrap(),
        divider: Regex::new(r"^={6,}\s*$").unwrap(),
        replace: Regex::new(r"^>{6,}\s*REPLACE\s*$").unwrap(),
        header: Regex::new(r"^#{3}\s+(\S.*?)\s*$").unwrap(),
    })
}

#[derive(PartialEq)]
enum State {
    Outside,
    Search,
    Replace,
}

fn clean_path(raw: &str) -> String {
    crate::repo_model::normalize_rel_path(raw.trim_matches('`').trim_matches('*'))
}

/// Parse every SEARCH/REPLACE block in `text`.
///
/// A block is a `### <path>` header, a `<<<<<<< SEARCH` line, the search
/// body, a `=======` divider, the replace body and a `>>>>>>> REPLACE` line.
/// Markers may use six or more characters. Consecutive blocks may share
/// one header. Prose and code fences between blocks are ignored.
pub fn parse_edit_blocks(text: &str) -> Result<Vec<SearchReplaceEdit>, EditError> {
    let m = markers();
    let mut edits = Vec::new();
    let mut path: Option<String> = None;
    let mut state = State::Outside;
    let mut search = String::new();
    let mut replace = String::new();
    let mut block_start = 0;
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += raw.len();
        let line = raw.trim_end_matches(['\n', '\r']);
        match state {
            State::Outside => {
                if let Some(caps) = m.header.captures(line) {
                    path = Some(clean_path(&caps[1]));
                } else if m.search.is_match(line) {
                    if path.is_none() {
                        return Err(EditError::MalformedBlock {
                            offset: line_offset,
                            reason: "SEARCH marker without a preceding '### <path>' header".into(),
                        });
                    }
                    state = State::Search;
                    block_start = line_offset;
                    search.clear();
                    replace.clear();
                } else if m.replace.is_match(line) {
                    return Err(EditError::MalformedBlock {
                        offset: line_offset,
                        reason: "REPLACE marker outside of a block".into(),
                    });
                }
            }
            State::Search => {
                if m.divider.is_match(line) {
                    state = State::Replace;
                } else if m.search.is_match(line) || m.replace.is_match(line) {
                    return Err(EditError::MalformedBlock {
                        offset: line_offset,
                        reason: "expected '=======' divider before this marker".into(),
                    });
                } else {
                    search.push_str(line);
                    search.push('\n');
                }
            }
            State::Replace => {
                if m.replace.is_match(line) {
                    edits.push(SearchReplaceEdit {
                        file: path.clone().unwrap_or_default(),
                        search: std::mem::take(&mut search),
                        replace: std::mem::take(&mut replace),
                    });
                    state = State::Outside;
                } else if m.search.is_match(line) || m.divider.is_match(line) {
                    return Err(EditError::MalformedBlock {
                        offset: line_offset,
                        reason: "expected '>>>>>>> REPLACE' to close the block".into(),
                    });
                } else {
                    replace.push_str(line);
                    replace.push('\n');
                }
            }
        }
    }
    if state != State::Outside {
        return Err(EditError::MalformedBlock {
            offset: block_start,
            reason: "unterminated SEARCH/REPLACE block".into(),
        });
    }
    Ok(edits)
}

fn push_body(out: &mut String, body: &str) {
    out.push_str(body);
    if !body.is_empty() && !body.ends_with('\n') {
        out.push('\n');
    }
}

/// Render edits in the block grammar accepted by [`parse_edit_blocks`].
pub fn render_edit_blocks(edits: &[SearchReplaceEdit]) -> String {
    let mut out = String::new();
    for (i, edit) in edits.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str("### ");
        out.push_str(&edit.file);
        out.push_str("\n<<<<<<< SEARCH\n");
        push_body(&mut out, &edit.search);
        out.push_str("=======\n");
        push_body(&mut out, &edit.replace);
        out.push_str(">>>>>>> REPLACE\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = "### njs/src/njs_vmcode.c\n<<<<<<< SEARCH\nstruct njs_property_next_s {\n    uint32_t    index;\n    njs_array_t *array;\n};\n=======\nstruct njs_property_next_s {\n    uint32_t    FIND_REFERENCES(index);\n    njs_array_t *array;\n};\n>>>>>>> REPLACE\n";

    #[test]
    fn figure_block() {
        let edits = parse_edit_blocks(FIG2).unwrap();
        assert_eq!(edits.len(), 1);
        assert_eq!(edits[0].file, "njs/src/njs_vmcode.c");
        assert_eq!(
            edits[0].replace,
            edits[0].search.replace("    index;", "    FIND_REFERENCES(index);")
        );
    }

    #[test]
    fn empty_and_multiple() {
        assert!(parse_edit_blocks("").unwrap().is_empty());
        let two = format!("{FIG2}\nsome prose\n```\n### src/a.c\n<<<<<<<<< SEARCH\nx\n=========\ny\n>>>>>>>>> REPLACE\n```\n");
        let edits = parse_edit_blocks(&two).unwrap();
        assert_eq!(edits.len(), 2);
        assert_eq!(edits[1].file, "src/a.c");
        assert_eq!(edits[1].search, "x\n");
    }

    #[test]
    fn malformed_offsets() {
        let no_header = "<<<<<<< SEARCH\na\n=======\nb\n>>>>>>> REPLACE\n";
        assert!(matches!(parse_edit_blocks(no_header), Err(EditError::MalformedBlock { offset: 0, .. })));
        let unterminated = "### a.c\n<<<<<<< SEARCH\na\n=======\nb\n";
        assert!(matches!(parse_edit_blocks(unterminated), Err(EditError::MalformedBlock { offset: 8, .. })));
        let stray = "text\n>>>>>>> REPLACE\n";
        assert!(matches!(parse_edit_blocks(stray), Err(EditError::MalformedBlock { offset: 5, .. })));
        let five = "### a.c\n<<<<< SEARCH\na\n";
        assert!(parse_edit_blocks(five).unwrap().is_empty());
        let six = "### a.c\n<<<<<< SEARCH\na\n======\nb\n>>>>>> REPLACE\n";
        assert_eq!(parse_edit_blocks(six).unwrap(), vec![SearchReplaceEdit::new("a.c", "a\n", "b\n")]);
    }

    #[test]
    fn render_round_trip() {
        let edits = parse_edit_blocks(FIG2).unwrap();
        assert_eq!(render_edit_blocks(&edits), FIG2);
    }
}

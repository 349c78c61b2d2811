use crate::text::normalize_line;

/// Where a search text was found in a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchMatch {
    /// Byte range of the matched text.
    pub start: usize,
    pub end: usize,
    /// True when only the whitespace-normalized comparison matched.
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocateError {
    NotFound,
    Ambiguous(usize),
}

fn exact_matches(content: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = content[from..].find(needle) {
        out.push(from + pos);
        from += pos + 1;
        while !content.is_char_boundary(from) {
            from += 1;
        }
    }
    out
}

/// Locate `search` in `content`: exact first, then line-wise with
/// whitespace-normalized comparison.
pub fn locate(content: &str, search: &str) -> Result<SearchMatch, LocateError> {
    let exact = exact_matches(content, search);
    match exact.len() {
        1 => {
            return Ok(SearchMatch { start: exact[0], end: exact[0] + search.len(), normalized: false })
        }
        n if n > 1 => return Err(LocateError::Ambiguous(n)),
        _ => {}
    }
    // A search that ends in a newline still matches a final line without one.
    if let Some(trimmed) = search.strip_suffix('\n') {
        if !trimmed.is_empty() && content.ends_with(trimmed) && !content.ends_with(search) {
            let hits = exact_matches(content, trimmed);
            if hits.len() == 1 {
                return Ok(SearchMatch { start: hits[0], end: content.len(), normalized: false });
            }
        }
    }
    locate_normalized(content, search)
}

fn locate_normalized(content: &str, search: &str) -> Result<SearchMatch, LocateError> {
    let wanted: Vec<String> = crate::text::split_lines(search).iter().map(|l| normalize_line(l)).collect();
    if wanted.is_empty() || wanted.iter().all(|l| l.is_empty()) {
        return Err(LocateError::NotFound);
    }
    let mut starts = Vec::new();
    let mut lines = Vec::new();
    let mut offset = 0;
    for raw in content.split_inclusive('\n') {
        starts.push(offset);
        lines.push(normalize_line(raw.trim_end_matches(['\n', '\r'])));
        offset += raw.len();
    }
    starts.push(content.len());
    let hits: Vec<usize> = (0..lines.len().saturating_sub(wanted.len() - 1))
        .filter(|&i| lines[i..i + wanted.len()] == wanted[..])
        .collect();
    match hits.len() {
        0 => Err(LocateError::NotFound),
        1 => {
            let i = hits[0];
            let mut end = starts[i + wanted.len()];
            // Keep the final line terminator if the search text had none.
            if !search.ends_with('\n') && content[..end].ends_with('\n') {
                end -= 1;
            }
            Ok(SearchMatch { start: starts[i], end, normalized: true })
        }
        n => Err(LocateError::Ambiguous(n)),
    }
}

/// Apply one search/replace to `content`.
pub fn apply_to_text(content: &str, search: &str, replace: &str) -> Result<String, LocateError> {
    let m = locate(content, search)?;
    let mut replacement = replace.to_string();
    if m.end == content.len() && !content.ends_with('\n') && search.ends_with('\n') {
        if let Some(r) = replacement.strip_suffix('\n') {
            replacement = r.to_string();
        }
    }
    let mut out = String::with_capacity(content.len() + replacement.len());
    out.push_str(&content[..m.start]);
    out.push_str(&replacement);
    out.push_str(&content[m.end..]);
    Ok(out)
}

/// True when two texts differ only by blank runs and trailing spaces.
pub fn equivalent_modulo_whitespace(a: &str, b: &str) -> bool {
    let la: Vec<String> = crate::text::split_lines(a).iter().map(|l| normalize_line(l)).collect();
    let lb: Vec<String> = crate::text::split_lines(b).iter().map(|l| normalize_line(l)).collect();
    la == lb
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_then_normalized() {
        let content = "int a;\nint  b;\t\nint c;\n";
        assert_eq!(apply_to_text(content, "int a;\n", "int z;\n").unwrap(), "int z;\nint  b;\t\nint c;\n");
        let m = locate(content, "int b;\n").unwrap();
        assert!(m.normalized);
        assert_eq!(apply_to_text(content, "int b;\n", "long b;\n").unwrap(), "int a;\nlong b;\nint c;\n");
    }

    #[test]
    fn ambiguity_and_absence() {
        let content = "x;\nx;\n";
        assert_eq!(locate(content, "x;\n"), Err(LocateError::Ambiguous(2)));
        assert_eq!(locate(content, "y;\n"), Err(LocateError::NotFound));
    }

    #[test]
    fn final_line_without_newline() {
        assert_eq!(apply_to_text("a\nb", "b\n", "c\n").unwrap(), "a\nc");
    }

    #[test]
    fn whitespace_equivalence() {
        assert!(equivalent_modulo_whitespace("a  b\n", "a b  \n"));
        assert!(!equivalent_modulo_whitespace("a b\n", "ab\n"));
    }
}

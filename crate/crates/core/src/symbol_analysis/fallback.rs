use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{BackendError, SymbolBackend, SymbolLocation};
use crate::repo_model::{list_source_files, parse_elements, read_source, slice_lines, CodeElement, LineRange, RepoLayout};
use crate::text::{is_ident_byte, is_ident_start, line_starts};

/// In-process symbol index: definitions are extracted elements, references
/// are identifier tokens outside comments and literals.
pub struct FallbackIndex {
    sources: HashMap<String, String>,
    elements: Vec<CodeElement>,
    /// identifier → (file, line, column) of every occurrence, in file order.
    tokens: BTreeMap<String, Vec<(String, usize, usize)>>,
}

/// Identifier tokens of C-family source as (byte offset, text), skipping
/// comments, string and character literals.
pub fn identifier_tokens(src: &str) -> Vec<(usize, &str)> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                i += 1;
            }
            i += 2;
        } else if b == b'"' || b == b'\'' {
            i += 1;
            while i < bytes.len() && bytes[i] != b && bytes[i] != b'\n' {
                if bytes[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            i += 1;
        } else if is_ident_start(b) {
            let start = i;
            while i < bytes.len() && is_ident_byte(bytes[i]) {
                i += 1;
            }
            out.push((start, &src[start..i]));
        } else if b.is_ascii_digit() {
            while i < bytes.len() && (is_ident_byte(bytes[i]) || bytes[i] == b'.') {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    out
}

impl FallbackIndex {
    pub fn build(root: &Path, layout: &RepoLayout) -> Result<Self, BackendError> {
        let files = list_source_files(root, layout).map_err(|e| BackendError(e.to_string()))?;
        let mut sources = HashMap::new();
        let mut elements = Vec::new();
        let mut tokens: BTreeMap<String, Vec<(String, usize, usize)>> = BTreeMap::new();
        for file in files {
            let Ok(src) = read_source(root, &file) else { continue };
            if let Ok(mut found) = parse_elements(root, &file) {
                elements.append(&mut found);
            }
            let starts = line_starts(&src);
            for (offset, ident) in identifier_tokens(&src) {
                let line = starts.partition_point(|&s| s <= offset);
                let col = offset - starts[line - 1] + 1;
                tokens.entry(ident.to_string()).or_default().push((file.clone(), line, col));
            }
            sources.insert(file, src);
        }
        Ok(Self { sources, elements, tokens })
    }

    pub fn elements(&self) -> &[CodeElement] {
        &self.elements
    }

    /// The identifier covering (line, column) in `file`.
    pub fn token_at(&self, file: &str, line: usize, column: usize) -> Option<String> {
        let src = self.sources.get(file)?;
        let starts = line_starts(src);
        let offset = starts.get(line.checked_sub(1)?)? + column.checked_sub(1)?;
        let bytes = src.as_bytes();
        if offset >= bytes.len() || !is_ident_byte(bytes[offset]) {
            return None;
        }
        let mut start = offset;
        while start > 0 && is_ident_byte(bytes[start - 1]) {
            start -= 1;
        }
        let mut end = offset;
        while end < bytes.len() && is_ident_byte(bytes[end]) {
            end += 1;
        }
        Some(src[start..end].to_string())
    }

    fn location(&self, file: &str, lines: LineRange) -> SymbolLocation {
        let preview = self.sources.get(file).map(|s| slice_lines(s, lines)).unwrap_or_default();
        SymbolLocation { file: file.to_string(), lines, preview }
    }
}

impl SymbolBackend for FallbackIndex {
    fn name(&self) -> &str {
        "fallback-index"
    }

    fn references_include_declaration(&self) -> bool {
        true
    }

    fn definition(&mut self, file: &str, line: usize, column: usize) -> Result<Vec<SymbolLocation>, BackendError> {
        let Some(token) = self.token_at(file, line, column) else {
            return Ok(Vec::new());
        };
        Ok(self
            .elements
            .iter()
            .filter(|e| e.name == token)
            .map(|e| self.location(&e.file, e.lines))
            .collect())
    }

    fn references(&mut self, file: &str, line: usize, column: usize) -> Result<Vec<SymbolLocation>, BackendError> {
        let Some(token) = self.token_at(file, line, column) else {
            return Ok(Vec::new());
        };
        let Some(hits) = self.tokens.get(&token) else {
            return Ok(Vec::new());
        };
        Ok(hits
            .iter()
            .map(|(f, l, _)| self.location(f, LineRange::new(*l, *l)))
            .collect())
    }

    fn shutdown(&mut self) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_skip_comments_and_literals() {
        let src = "int a; // b\n/* c */ char *d = \"e\\\"f\"; char g = 'h';\n";
        let idents: Vec<&str> = identifier_tokens(src).into_iter().map(|(_, t)| t).collect();
        assert_eq!(idents, vec!["int", "a", "char", "d", "char", "g"]);
    }
}

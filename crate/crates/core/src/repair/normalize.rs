use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::edit_engine::FileChange;

/// How patched files are canonicalized before voting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalizer {
    /// Comment stripping and token-level reformatting with a fixed style.
    #[default]
    Builtin,
    /// Comment stripping, then an external formatter reading stdin and
    /// writing stdout, e.g. `clang-format --style=LLVM`.
    External { argv: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub digest: String,
    /// Files whose normalized content differs from the original.
    pub files: Vec<String>,
    /// The external formatter was unavailable and whitespace collapsing was
    /// used instead.
    pub fallback: bool,
}

impl Normalizer {
    /// Canonical form of `text`. The flag reports a fallback.
    pub fn normalize(&self, text: &str) -> (String, bool) {
        match self {
            Normalizer::Builtin => (format_tokens(text), false),
            Normalizer::External { argv } => match run_formatter(argv, &strip_comments(text)) {
                Ok(out) => (out, false),
                Err(e) => {
                    log::warn!("formatter unavailable ({e}); collapsing whitespace instead");
                    (collapse_whitespace(&strip_comments(text)), true)
                }
            },
        }
    }

    /// Digest over (path, normalized content) of every file whose
    /// normalized content changed.
    pub fn fingerprint(&self, changes: &[FileChange]) -> Fingerprint {
        let mut sorted: Vec<&FileChange> = changes.iter().collect();
        sorted.sort_by(|a, b| a.path.cmp(&b.path));
        let mut hasher = Sha256::new();
        let mut files = Vec::new();
        let mut fallback = false;
        for change in sorted {
            let (after, fa) = match &change.after {
                Some(t) => {
                    let (n, f) = self.normalize(t);
                    (Some(n), f)
                }
                None => (None, false),
            };
            let (before, fb) = match &change.before {
                Some(t) => {
                    let (n, f) = self.normalize(t);
                    (Some(n), f)
                }
                None => (None, false),
            };
            fallback |= fa || fb;
            if after == before {
                continue;
            }
            hasher.update(change.path.as_bytes());
            hasher.update([0]);
            match &after {
                Some(t) => {
                    hasher.update([1]);
                    hasher.update(t.as_bytes());
                }
                None => hasher.update([2]),
            }
            hasher.update([0]);
            files.push(change.path.clone());
        }
        Fingerprint { digest: hex::encode(hasher.finalize()), files, fallback }
    }
}

fn run_formatter(argv: &[String], input: &str) -> std::io::Result<String> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty formatter command"))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let data = input.to_string();
    let writer = std::thread::spawn(move || stdin.write_all(data.as_bytes()));
    let out = child.wait_with_output()?;
    writer.join().expect("formatter writer panicked")?;
    if !out.status.success() {
        return Err(std::io::Error::other(format!("formatter exited with {}", out.status)));
    }
    String::from_utf8(out.stdout).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token<'a> {
    Word(&'a str),
    Directive(String),
    Newline,
}

/// Split C/C++ source into tokens, dropping comments. Literals are kept
/// verbatim; preprocessor directives become single tokens.
fn tokenize(text: &str) -> Vec<Token<'_>> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line_start = true;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'\n' => {
                tokens.push(Token::Newline);
                line_start = true;
                i += 1;
            }
            b' ' | b'\t' | b'\r' | b'\x0c' | b'\x0b' => i += 1,
            b'\\' if bytes.get(i + 1) == Some(&b'\n') => i += 2,
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i = text[i + 2..].find("*/").map_or(bytes.len(), |e| i + 2 + e + 2);
            }
            b'#' if line_start => {
                let (directive, end) = read_directive(text, i);
                tokens.push(Token::Directive(directive));
                i = end;
            }
            b'"' | b'\'' => {
                let end = literal_end(bytes, i);
                tokens.push(Token::Word(&text[i..end]));
                line_start = false;
                i = end;
            }
            _ if b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80 => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.' || bytes[i] >= 0x80) {
                    i += 1;
                }
                tokens.push(Token::Word(&text[start..i]));
                line_start = false;
            }
            _ => {
                let len = punct_len(&bytes[i..]);
                tokens.push(Token::Word(&text[i..i + len]));
                line_start = false;
                i += len;
            }
        }
    }
    tokens
}

fn literal_end(bytes: &[u8], start: usize) -> usize {
    let quote = bytes[start];
    let mut i = start + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' => return i,
            c if c == quote => return i + 1,
            _ => i += 1,
        }
    }
    bytes.len()
}

fn read_directive(text: &str, start: usize) -> (String, usize) {
    let bytes = text.as_bytes();
    let mut out = String::from("#");
    let mut space = false;
    let mut i = start + 1;
    let push = |out: &mut String, piece: &str, space: &mut bool| {
        if *space && out.len() > 1 {
            out.push(' ');
        }
        *space = false;
        out.push_str(piece);
    };
    while i < bytes.len() && bytes[i] != b'\n' {
        if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'\n') {
            space = true;
            i += 2;
        } else if bytes[i] == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if bytes[i] == b'/' && bytes.get(i + 1) == Some(&b'*') {
            space = true;
            i = text[i + 2..].find("*/").map_or(bytes.len(), |e| i + 2 + e + 2);
        } else if bytes[i].is_ascii_whitespace() {
            space = true;
            i += 1;
        } else if bytes[i] == b'"' || bytes[i] == b'\'' {
            let end = literal_end(bytes, i);
            push(&mut out, &text[i..end], &mut space);
            i = end;
        } else {
            let ch = text[i..].chars().next().expect("char boundary");
            let mut buf = [0u8; 4];
            push(&mut out, ch.encode_utf8(&mut buf), &mut space);
            i += ch.len_utf8();
        }
    }
    (out, i)
}

fn punct_len(rest: &[u8]) -> usize {
    const THREE: [&[u8]; 4] = [b"<<=", b">>=", b"...", b"->*"];
    const TWO: [&[u8]; 19] = [
        b"->", b"++", b"--", b"<<", b">>", b"<=", b">=", b"==", b"!=", b"&&", b"||", b"+=", b"-=", b"*=", b"/=", b"%=",
        b"&=", b"|=", b"::",
    ];
    if THREE.iter().any(|p| rest.starts_with(p)) {
        3
    } else if TWO.iter().any(|p| rest.starts_with(p)) || rest.starts_with(b"^=") {
        2
    } else {
        std::str::from_utf8(&rest[..rest.len().min(4)])
            .ok()
            .and_then(|s| s.chars().next())
            .map_or(1, char::len_utf8)
    }
}

/// Source without comments; line structure is kept.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for token in tokenize(text) {
        match token {
            Token::Newline => {
                out.push('\n');
                pending_space = false;
            }
            Token::Directive(d) => {
                out.push_str(&d);
                pending_space = true;
            }
            Token::Word(w) => {
                if pending_space {
                    out.push(' ');
                }
                out.push_str(w);
                pending_space = true;
            }
        }
    }
    out
}

/// Fixed-style reformatting: comments removed, one statement per line,
/// four-space indentation by brace depth, single spaces between tokens.
pub fn format_tokens(text: &str) -> String {
    let mut out = String::new();
    let mut line: Vec<&str> = Vec::new();
    let mut depth: usize = 0;
    let mut parens: usize = 0;
    let flush = |line: &mut Vec<&str>, out: &mut String, depth: usize| {
        if !line.is_empty() {
            out.push_str(&"    ".repeat(depth));
            out.push_str(&line.join(" "));
            out.push('\n');
            line.clear();
        }
    };
    for token in tokenize(text) {
        match token {
            Token::Newline => {}
            Token::Directive(d) => {
                flush(&mut line, &mut out, depth);
                out.push_str(&d);
                out.push('\n');
            }
            Token::Word(w) => match w {
                "(" | "[" => {
                    parens += 1;
                    line.push(w);
                }
                ")" | "]" => {
                    parens = parens.saturating_sub(1);
                    line.push(w);
                }
                "{" => {
                    line.push(w);
                    flush(&mut line, &mut out, depth);
                    depth += 1;
                }
                "}" => {
                    flush(&mut line, &mut out, depth);
                    depth = depth.saturating_sub(1);
                    line.push(w);
                }
                ";" if parens == 0 => {
                    line.push(w);
                    flush(&mut line, &mut out, depth);
                }
                _ => {
                    if line.first() == Some(&"}") && w != ";" && w != "," && w != "else" && w != "while" {
                        flush(&mut line, &mut out, depth);
                    }
                    line.push(w);
                }
            },
        }
    }
    flush(&mut line, &mut out, depth);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn change(before: &str, after: &str) -> FileChange {
        FileChange { path: "src/buf.c".into(), before: Some(before.into()), after: Some(after.into()) }
    }

    #[test]
    fn comments_and_layout_are_ignored() {
        let a = "int f(int x) {\n    return x + 1; /* bump */\n}\n";
        let b = "int f(int x)\n{\n\treturn x+1; // bump by one\n}\n";
        assert_eq!(format_tokens(a), format_tokens(b));
        assert_eq!(format_tokens(a), "int f ( int x ) {\n    return x + 1 ;\n}\n");
        assert_ne!(format_tokens(a), format_tokens("int f(int x) { return x + 2; }"));
    }

    #[test]
    fn literals_and_directives_survive() {
        let src = "#  define  MSG \"a  // b\" /* c */\nconst char *s = \"x /* y */\";\n";
        let out = format_tokens(src);
        assert!(out.starts_with("#define MSG \"a  // b\"\n"), "{out}");
        assert!(out.contains("\"x /* y */\""));
        assert_eq!(strip_comments("a; // x\nb; /* y */\n"), "a ;\nb ;\n");
    }

    #[test]
    fn fingerprint_skips_cosmetic_files() {
        let base = "int f(void) {\n    return 0;\n}\n";
        let fix = change(base, "int f(void) {\n    return 1;\n}\n");
        let fix_commented = change(base, "int f(void) {\n    return 1; // fixed\n}\n");
        let cosmetic = FileChange { path: "src/other.c".into(), before: Some("int a;\n".into()), after: Some("int  a; // x\n".into()) };
        let n = Normalizer::Builtin;
        let one = n.fingerprint(std::slice::from_ref(&fix));
        assert_eq!(one, n.fingerprint(&[fix_commented]));
        assert_eq!(one, n.fingerprint(&[cosmetic, fix]));
        assert_eq!(one.files, vec!["src/buf.c"]);
        assert!(!one.fallback);
    }

    #[test]
    fn missing_formatter_falls_back() {
        let n = Normalizer::External { argv: vec!["/nonexistent/formatter".into()] };
        let (text, fallback) = n.normalize("int  a; // c\n");
        assert!(fallback);
        assert_eq!(text, "int a ;");
        let identity = Normalizer::External { argv: vec!["cat".into()] };
        assert_eq!(identity.normalize("int a; // c\n"), ("int a ;\n".to_string(), false));
    }
}

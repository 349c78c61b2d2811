use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock, RwLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Full, untruncated PoC logs keyed by run name. Cloning shares the store.
#[derive(Debug, Clone, Default)]
pub struct LogStore {
    inner: Arc<RwLock<HashMap<String, String>>>,
}

impl LogStore {
    pub fn insert(&self, name: &str, log: String) {
        self.inner.write().expect("log store poisoned").insert(name.to_string(), log);
    }

    pub fn get(&self, name: &str) -> Option<String> {
        self.inner.read().expect("log store poisoned").get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.inner.read().expect("log store poisoned").keys().cloned().collect();
        names.sort();
        names
    }

    pub fn snapshot(&self) -> HashMap<String, String> {
        self.inner.read().expect("log store poisoned").clone()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionSummary {
    pub passed: usize,
    pub failed: usize,
    /// id → (passes, failures)
    pub per_id: BTreeMap<String, (usize, usize)>,
}

impl AssertionSummary {
    pub fn total(&self) -> usize {
        self.passed + self.failed
    }

    pub fn render(&self) -> String {
        let mut out = format!("Assertion summary: {} passed, {} failed\n", self.passed, self.failed);
        for (id, (p, f)) in &self.per_id {
            out.push_str(&format!("  {id}: {p} PASS, {f} FAIL\n"));
        }
        out
    }
}

fn spa_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\[SPA\] (\S+) (PASS|FAIL)\b").unwrap())
}

/// Count `[SPA] <id> PASS` / `[SPA] <id> FAIL ...` lines; others are ignored.
pub fn summarize_assertions(log: &str) -> AssertionSummary {
    let mut summary = AssertionSummary::default();
    for line in log.lines() {
        let Some(caps) = spa_regex().captures(line) else { continue };
        let id = caps[1].trim_matches('"').to_string();
        let entry = summary.per_id.entry(id).or_insert((0, 0));
        if &caps[2] == "PASS" {
            summary.passed += 1;
            entry.0 += 1;
        } else {
            summary.failed += 1;
            entry.1 += 1;
        }
    }
    summary
}

/// Keep the first `head` and last `tail` lines, replacing the middle with an
/// elision marker naming the stored full log.
pub fn truncate_log(log: &str, head: usize, tail: usize, name: &str) -> String {
    let lines: Vec<&str> = log.lines().collect();
    if lines.len() <= head + tail {
        return log.to_string();
    }
    let elided = lines.len() - head - tail;
    let mut out: Vec<String> = lines[..head].iter().map(|s| s.to_string()).collect();
    out.push(format!("... [{elided} lines elided; full log stored as '{name}'] ..."));
    out.extend(lines[lines.len() - tail..].iter().map(|s| s.to_string()));
    let mut text = out.join("\n");
    if log.ends_with('\n') {
        text.push('\n');
    }
    text
}

pub const DEFAULT_SANITIZER_SIGNATURES: &[&str] = &[
    r"(?m)^==\d+==ERROR: ",
    r"(?m)^SUMMARY: [A-Za-z]+Sanitizer",
    r"(?m)runtime error: ",
];

/// Regexes whose match anywhere in a log means a sanitizer fired.
#[derive(Debug, Clone)]
pub struct SanitizerSignatures {
    patterns: Vec<Regex>,
}

impl SanitizerSignatures {
    pub fn new(patterns: &[String]) -> Result<Self, regex::Error> {
        Ok(Self { patterns: patterns.iter().map(|p| Regex::new(p)).collect::<Result<_, _>>()? })
    }

    pub fn matches(&self, log: &str) -> bool {
        self.patterns.iter().any(|p| p.is_match(log))
    }
}

impl Default for SanitizerSignatures {
    fn default() -> Self {
        let owned: Vec<String> = DEFAULT_SANITIZER_SIGNATURES.iter().map(|s| s.to_string()).collect();
        Self::new(&owned).expect("default signatures compile")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_by_id() {
        let log = "[SPA] idx_bound PASS\n[SPA] idx_bound PASS\n==12==ERROR: AddressSanitizer: heap-buffer-overflow\n\
                   [SPA] idx_bound PASS\n[SPA] idx_bound FAIL expr=\"i < 16\"\nSUMMARY: AddressSanitizer: x\n";
        let s = summarize_assertions(log);
        assert_eq!((s.passed, s.failed), (3, 1));
        assert_eq!(s.per_id["idx_bound"], (3, 1));
        assert_eq!(summarize_assertions(""), AssertionSummary::default());
    }

    #[test]
    fn truncation_arithmetic() {
        let log: String = (0..1000).map(|i| format!("line {i}\n")).collect();
        let t = truncate_log(&log, 100, 100, "run");
        assert_eq!(t.lines().count(), 201);
        assert!(t.contains("... [800 lines elided; full log stored as 'run'] ..."));
        let short = "a\nb\nc\nd\ne\n";
        assert_eq!(truncate_log(short, 100, 100, "x"), short);
    }

    #[test]
    fn default_signatures() {
        let sigs = SanitizerSignatures::default();
        assert!(sigs.matches("noise\n==4242==ERROR: AddressSanitizer: heap-buffer-overflow on address"));
        assert!(sigs.matches("a.c:3:5: runtime error: signed integer overflow"));
        assert!(!sigs.matches("[SPA] idx FAIL expr=\"ERROR\"\nok\n"));
    }
}

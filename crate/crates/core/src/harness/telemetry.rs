use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agents::{ToolName, Transcript, TranscriptStep};

/// What a `run_python_code` call was used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptCategory {
    /// Attempted a blocked operation.
    Forbidden,
    /// Retrieved PoC output.
    Poc,
    /// Printed literal text only.
    Think,
    /// String or pattern processing.
    String,
    /// Arithmetic or bitwise computation.
    Int,
    Other,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptCallStats {
    pub total: usize,
    pub poc: usize,
    pub string: usize,
    pub int: usize,
    pub think: usize,
    pub forbidden: usize,
    pub other: usize,
}

impl ScriptCallStats {
    fn add(&mut self, category: ScriptCategory) {
        self.total += 1;
        let slot = match category {
            ScriptCategory::Forbidden => &mut self.forbidden,
            ScriptCategory::Poc => &mut self.poc,
            ScriptCategory::Think => &mut self.think,
            ScriptCategory::String => &mut self.string,
            ScriptCategory::Int => &mut self.int,
            ScriptCategory::Other => &mut self.other,
        };
        *slot += 1;
    }

    pub fn merge(&mut self, other: &ScriptCallStats) {
        self.total += other.total;
        self.poc += other.poc;
        self.string += other.string;
        self.int += other.int;
        self.think += other.think;
        self.forbidden += other.forbidden;
        self.other += other.other;
    }

    pub fn share(&self, count: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * count as f64 / self.total as f64
        }
    }
}

struct Patterns {
    literal_print: Regex,
    string_ops: Regex,
    int_ops: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        literal_print: Regex::new(r#"^print\(\s*(?:[rbfu]?"(?:[^"\\{}]|\\.)*"|[rbfu]?'(?:[^'\\{}]|\\.)*'|"""[^{}]*?"""|'''[^{}]*?''')\s*\)$"#).unwrap(),
        string_ops: Regex::new(
            r"\.(?:split|splitlines|find|rfind|index|startswith|endswith|strip|lstrip|rstrip|replace|join|count|lower|upper|encode|decode|format)\(|\bre\.|\blen\(|\bord\(|\bchr\(|\[[^\]]*:[^\]]*\]",
        )
        .unwrap(),
        int_ops: Regex::new(r"\b(?:0x[0-9a-fA-F]+|\d+)\s*(?:[-+*/%&|^]|<<|>>|\*\*)|(?:[-+*/%&|^]|<<|>>|\*\*)\s*(?:0x[0-9a-fA-F]+|\d+)\b|\b(?:hex|int|bin|abs|divmod|pow)\(").unwrap(),
    })
}

fn statements(code: &str) -> Vec<&str> {
    code.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Heuristic label for one script; the first matching rule wins in the
/// order forbidden, poc, think, string, int.
pub fn classify_script(code: &str, violations: usize) -> ScriptCategory {
    let p = patterns();
    if violations > 0 {
        return ScriptCategory::Forbidden;
    }
    if code.contains("get_poc_output") {
        return ScriptCategory::Poc;
    }
    let lines = statements(code);
    if !lines.is_empty() && lines.iter().all(|l| p.literal_print.is_match(l)) {
        return ScriptCategory::Think;
    }
    if p.string_ops.is_match(code) {
        return ScriptCategory::String;
    }
    if p.int_ops.is_match(code) {
        return ScriptCategory::Int;
    }
    ScriptCategory::Other
}

fn script_of(step: &TranscriptStep) -> Option<&str> {
    let call = step.tool_call.as_ref()?;
    if call.name != ToolName::RunPythonCode.as_str() || step.refused {
        return None;
    }
    call.arguments.get("code").and_then(|c| c.as_str())
}

/// Category counts over every script call in the transcripts.
pub fn classify_script_calls<'a>(transcripts: impl IntoIterator<Item = &'a Transcript>) -> ScriptCallStats {
    let mut stats = ScriptCallStats::default();
    for transcript in transcripts {
        for step in &transcript.steps {
            if let Some(code) = script_of(step) {
                stats.add(classify_script(code, step.violations));
            }
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules() {
        assert_eq!(classify_script("print(get_poc_output('run-1')[:100])", 0), ScriptCategory::Poc);
        assert_eq!(classify_script("print('Hypothesis: len is off by one')", 0), ScriptCategory::Think);
        assert_eq!(classify_script("# note\nprint(\"a\")\nprint('b')", 0), ScriptCategory::Think);
        assert_eq!(classify_script("open('/etc/passwd').read()", 1), ScriptCategory::Forbidden);
        assert_eq!(classify_script("s = 'a,b'\nprint(s.split(','))", 0), ScriptCategory::String);
        assert_eq!(classify_script("print(hex(0x10 << 2))", 0), ScriptCategory::Int);
        assert_eq!(classify_script("print(16 + 1)", 0), ScriptCategory::Int);
        assert_eq!(classify_script("x = [y for y in z]", 0), ScriptCategory::Other);
        assert_eq!(classify_script("print(f'{1+1}')", 0), ScriptCategory::Int);
    }
}

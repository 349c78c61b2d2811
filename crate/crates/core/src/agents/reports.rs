use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repo_model::LineRange;

pub const ISSUE_HEADING: &str = "## Issue Report";
pub const CONTEXT_HEADING: &str = "## Context Analysis Report";
pub const PROPERTY_HEADING: &str = "## Property Analysis Report";
/// Insight text that allows a property report without properties.
pub const NO_STABLE_PROPERTY: &str = "no stable property found";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct ReportError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "frame", rename_all = "snake_case")]
pub enum TraceLink {
    Frame(usize),
    NotInTrace,
}

impl fmt::Display for TraceLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceLink::Frame(n) => write!(f, "frame #{n}"),
            TraceLink::NotInTrace => f.write_str("not in trace"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSource {
    pub file: String,
    pub element: Option<String>,
    pub lines: LineRange,
}

impl fmt::Display for ContextSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{} ({})", self.file, self.lines, self.element.as_deref().unwrap_or("none"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextItem {
    pub code: String,
    pub source: ContextSource,
    pub trace_link: TraceLink,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextAnalysisReport {
    pub items: Vec<ContextItem>,
    pub insights: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssertionResult {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl fmt::Display for AssertionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssertionResult::Pass => "PASS",
            AssertionResult::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyProperty {
    pub assertion: String,
    pub file: String,
    pub line: usize,
    pub purpose: String,
    pub result: AssertionResult,
    pub interpretation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyAnalysisReport {
    pub properties: Vec<SafetyProperty>,
    pub insights: String,
}

fn heading_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*#{2,4}\s*(?:\*\*)?\s*(context|property|insights)\b\s*(?:#?\s*(\d+))?").unwrap())
}

fn label_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)^\s*(?:[-*]\s+)?(?:\d+[.)]\s+)?(?:\*\*)?(code|source|trace link|rationale|assertion|location|purpose|result|interpretation)(?:\*\*)?\s*:\s*(?:\*\*)?\s?(.*)$",
        )
        .unwrap()
    })
}

fn fence_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(`{3,}|~{3,})").unwrap())
}

#[derive(Debug)]
struct Section<'a> {
    kind: String,
    lines: Vec<&'a str>,
}

/// Split into `### <Kind> [n]` sections. Lines before the first heading are
/// dropped; fenced code never starts a section.
fn sections(text: &str) -> Vec<Section<'_>> {
    let mut out: Vec<Section> = Vec::new();
    let mut fence: Option<String> = None;
    for line in text.lines() {
        if let Some(open) = &fence {
            if line.trim_start().starts_with(open.as_str()) && line.trim().chars().all(|c| c == open.chars().next().unwrap()) {
                fence = None;
            }
        } else if let Some(m) = fence_regex().captures(line) {
            fence = Some(m[1].to_string());
        } else if let Some(c) = heading_regex().captures(line) {
            out.push(Section { kind: c[1].to_ascii_lowercase(), lines: Vec::new() });
            continue;
        }
        if let Some(s) = out.last_mut() {
            s.lines.push(line);
        }
    }
    out
}

/// Label → value for one item section. Values span until the next label.
fn fields(lines: &[&str]) -> Vec<(String, String)> {
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    let mut fence: Option<String> = None;
    for line in lines {
        if fence.is_none() {
            if let Some(c) = label_regex().captures(line) {
                let first = c[2].trim_end().to_string();
                out.push((c[1].to_ascii_lowercase(), if first.is_empty() { Vec::new() } else { vec![first] }));
                if let Some(m) = fence_regex().captures(&c[2]) {
                    fence = Some(m[1].to_string());
                }
                continue;
            }
        }
        if let Some(open) = &fence {
            if line.trim_start().starts_with(open.as_str()) && line.trim().chars().all(|c| c == open.chars().next().unwrap()) {
                fence = None;
            }
        } else if let Some(m) = fence_regex().captures(line) {
            fence = Some(m[1].to_string());
        }
        if let Some((_, v)) = out.last_mut() {
            v.push(line.to_string());
        }
    }
    out.into_iter().map(|(k, v)| (k, v.join("\n").trim().to_string())).collect()
}

/// Remove a surrounding code fence, if any.
fn unfence(value: &str) -> String {
    let lines: Vec<&str> = value.lines().collect();
    if lines.len() >= 2 && fence_regex().is_match(lines[0]) && fence_regex().is_match(lines[lines.len() - 1]) {
        return lines[1..lines.len() - 1].join("\n").trim_end().to_string();
    }
    value.trim_matches('`').to_string()
}

fn fence_for(code: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for c in code.chars() {
        if c == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    "`".repeat(longest.max(2) + 1)
}

fn lang_for(file: &str) -> &'static str {
    if file.ends_with(".c") || file.ends_with(".h") {
        "c"
    } else {
        "cpp"
    }
}

fn get<'a>(fields: &'a [(String, String)], label: &str, item: &str) -> Result<&'a str, ReportError> {
    match fields.iter().find(|(k, _)| k == label) {
        Some((_, v)) if !v.is_empty() => Ok(v),
        Some(_) => Err(ReportError(format!("{item}: field '{}' is empty", capitalize(label)))),
        None => Err(ReportError(format!("{item}: field '{}' is missing", capitalize(label)))),
    }
}

fn capitalize(label: &str) -> String {
    let mut c = label.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn parse_source(value: &str) -> Result<ContextSource, ReportError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^`?([^\s`:]+):(\d+)(?:\s*-\s*(\d+))?`?\s*(?:\(([^)]*)\))?").unwrap());
    let c = re
        .captures(value.trim())
        .ok_or_else(|| ReportError(format!("Source '{value}' is not of the form file:start-end (element)")))?;
    let start: usize = c[2].parse().map_err(|_| ReportError(format!("bad line number in '{value}'")))?;
    let end: usize = c.get(3).map_or(Ok(start), |m| m.as_str().parse()).map_err(|_| ReportError(format!("bad line number in '{value}'")))?;
    if start == 0 || end < start {
        return Err(ReportError(format!("Source '{value}' has an invalid line range")));
    }
    let element = c
        .get(4)
        .map(|m| m.as_str().trim().trim_matches('`').to_string())
        .filter(|e| !e.is_empty() && !e.eq_ignore_ascii_case("none") && e != "-");
    Ok(ContextSource { file: c[1].to_string(), element, lines: LineRange::new(start, end) })
}

fn parse_trace_link(value: &str) -> Result<TraceLink, ReportError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)(?:#\s*(\d+))|(?:frame\s+(\d+))").unwrap());
    let lower = value.to_ascii_lowercase();
    if lower.contains("not in trace") || lower.contains("not in the trace") || lower.contains("not in stack") {
        return Ok(TraceLink::NotInTrace);
    }
    let c = re
        .captures(value)
        .ok_or_else(|| ReportError(format!("Trace link '{value}' must be 'frame #N' or 'not in trace'")))?;
    let n = c.get(1).or_else(|| c.get(2)).unwrap().as_str();
    Ok(TraceLink::Frame(n.parse().map_err(|_| ReportError(format!("bad frame index in '{value}'")))?))
}

fn insights_of(secs: &[Section]) -> Result<String, ReportError> {
    let sec = secs
        .iter()
        .find(|s| s.kind == "insights")
        .ok_or_else(|| ReportError("the '### Insights' section is missing".into()))?;
    let text = sec.lines.join("\n").trim().to_string();
    if text.is_empty() {
        return Err(ReportError("the '### Insights' section is empty".into()));
    }
    Ok(text)
}

pub fn parse_context_report(text: &str) -> Result<ContextAnalysisReport, ReportError> {
    let secs = sections(text);
    let mut items = Vec::new();
    for (i, sec) in secs.iter().filter(|s| s.kind == "context").enumerate() {
        let name = format!("Context {}", i + 1);
        let f = fields(&sec.lines);
        items.push(ContextItem {
            code: unfence(get(&f, "code", &name)?),
            source: parse_source(get(&f, "source", &name)?)?,
            trace_link: parse_trace_link(get(&f, "trace link", &name)?)?,
            rationale: get(&f, "rationale", &name)?.to_string(),
        });
    }
    if items.is_empty() {
        return Err(ReportError("the report lists no '### Context N' items".into()));
    }
    Ok(ContextAnalysisReport { items, insights: insights_of(&secs)? })
}

pub fn render_context_report(report: &ContextAnalysisReport) -> String {
    let mut out = String::new();
    for (i, item) in report.items.iter().enumerate() {
        let fence = fence_for(&item.code);
        out.push_str(&format!(
            "### Context {}\nCode:\n{fence}{}\n{}\n{fence}\nSource: {}\nTrace link: {}\nRationale: {}\n\n",
            i + 1,
            lang_for(&item.source.file),
            item.code,
            item.source,
            item.trace_link,
            item.rationale
        ));
    }
    out.push_str(&format!("### Insights\n{}\n", report.insights));
    out
}

fn parse_location(value: &str) -> Result<(String, usize), ReportError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^`?([^\s`:]+):(\d+)").unwrap());
    let c = re
        .captures(value.trim())
        .ok_or_else(|| ReportError(format!("Location '{value}' is not of the form file:line")))?;
    let line: usize = c[2].parse().map_err(|_| ReportError(format!("bad line number in '{value}'")))?;
    if line == 0 {
        return Err(ReportError(format!("Location '{value}' has line 0")));
    }
    Ok((c[1].to_string(), line))
}

fn parse_result(value: &str) -> Result<AssertionResult, ReportError> {
    let word: String = value.trim_start_matches(['*', '`']).chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    match word.to_ascii_uppercase().as_str() {
        "PASS" | "PASSED" => Ok(AssertionResult::Pass),
        "FAIL" | "FAILED" => Ok(AssertionResult::Fail),
        _ => Err(ReportError(format!("Result '{value}' must be PASS or FAIL"))),
    }
}

pub fn parse_property_report(text: &str) -> Result<PropertyAnalysisReport, ReportError> {
    let secs = sections(text);
    let mut properties = Vec::new();
    for (i, sec) in secs.iter().filter(|s| s.kind == "property").enumerate() {
        let name = format!("Property {}", i + 1);
        let f = fields(&sec.lines);
        let (file, line) = parse_location(get(&f, "location", &name)?)?;
        properties.push(SafetyProperty {
            assertion: unfence(get(&f, "assertion", &name)?),
            file,
            line,
            purpose: get(&f, "purpose", &name)?.to_string(),
            result: parse_result(get(&f, "result", &name)?)?,
            interpretation: get(&f, "interpretation", &name)?.to_string(),
        });
    }
    let insights = insights_of(&secs)?;
    if properties.is_empty() && !insights.to_ascii_lowercase().contains(NO_STABLE_PROPERTY) {
        return Err(ReportError(format!(
            "the report lists no '### Property N' items; if none was found, the insights must say \"{NO_STABLE_PROPERTY}\""
        )));
    }
    Ok(PropertyAnalysisReport { properties, insights })
}

pub fn render_property_report(report: &PropertyAnalysisReport) -> String {
    let mut out = String::new();
    for (i, p) in report.properties.iter().enumerate() {
        let fence = fence_for(&p.assertion);
        out.push_str(&format!(
            "### Property {}\nAssertion:\n{fence}{}\n{}\n{fence}\nLocation: {}:{}\nPurpose: {}\nResult: {}\nInterpretation: {}\n\n",
            i + 1,
            lang_for(&p.file),
            p.assertion,
            p.file,
            p.line,
            p.purpose,
            p.result,
            p.interpretation
        ));
    }
    out.push_str(&format!("### Insights\n{}\n", report.insights));
    out
}

/// Issue text followed by whichever reports were produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnhancedIssueReport {
    pub issue_text: String,
    pub context_report: Option<String>,
    pub property_report: Option<String>,
}

/// Demote lines that would read as one of the fixed section headings.
fn escape_body(text: &str) -> String {
    let mut out: Vec<String> = Vec::new();
    for line in text.trim_end().lines() {
        let t = line.trim_end();
        if t == ISSUE_HEADING || t == CONTEXT_HEADING || t == PROPERTY_HEADING {
            out.push(format!("#{t}"));
        } else {
            out.push(line.to_string());
        }
    }
    out.join("\n")
}

pub fn build_enhanced_report(issue_text: &str, context_report: Option<&str>, property_report: Option<&str>) -> EnhancedIssueReport {
    EnhancedIssueReport {
        issue_text: escape_body(issue_text),
        context_report: context_report.map(escape_body),
        property_report: property_report.map(escape_body),
    }
}

impl EnhancedIssueReport {
    pub fn render(&self) -> String {
        let mut out = format!("{ISSUE_HEADING}\n\n{}\n", self.issue_text);
        if let Some(r) = &self.context_report {
            out.push_str(&format!("\n{CONTEXT_HEADING}\n\n{r}\n"));
        }
        if let Some(r) = &self.property_report {
            out.push_str(&format!("\n{PROPERTY_HEADING}\n\n{r}\n"));
        }
        out
    }

    /// Recover the sections of a rendered report.
    pub fn parse(text: &str) -> Option<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&ISSUE_HEADING) {
            return None;
        }
        let ctx = lines.iter().position(|l| *l == CONTEXT_HEADING);
        let prop = lines.iter().position(|l| *l == PROPERTY_HEADING);
        let body = |from: usize, to: usize| lines[from + 1..to].join("\n").trim_matches('\n').to_string();
        let issue_end = ctx.or(prop).unwrap_or(lines.len());
        let ctx_end = prop.unwrap_or(lines.len());
        Some(Self {
            issue_text: body(0, issue_end),
            context_report: ctx.map(|c| body(c, ctx_end)),
            property_report: prop.map(|p| body(p, lines.len())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CONTEXT: &str = r#"Some preamble the parser ignores.

### Context 1
Code:
```c
for (i = 0; i <= len; i++) {
    buf[i] = src[i];
}
```
Source: src/buf.c:16-18 (copy_name)
Trace link: frame #0
Rationale: The crashing write.

### Context 2
**Code:** `#define NAME_CAP 16`
**Source:** `src/buf.h:4` (NAME_CAP)
**Trace link:** not in trace
**Rationale:** Capacity of the destination.
It bounds the loop.

### Insights
The loop writes one byte past the buffer.
"#;

    #[test]
    fn parses_lenient_context_report() {
        let r = parse_context_report(CONTEXT).unwrap();
        assert_eq!(r.items.len(), 2);
        assert_eq!(r.items[0].trace_link, TraceLink::Frame(0));
        assert_eq!(r.items[0].source.lines, LineRange::new(16, 18));
        assert!(r.items[0].code.starts_with("for (i = 0;"));
        assert_eq!(r.items[1].code, "#define NAME_CAP 16");
        assert_eq!(r.items[1].source.element.as_deref(), Some("NAME_CAP"));
        assert_eq!(r.items[1].trace_link, TraceLink::NotInTrace);
        assert_eq!(r.items[1].rationale, "Capacity of the destination.\nIt bounds the loop.");
        let again = parse_context_report(&render_context_report(&r)).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn missing_fields_are_named() {
        let broken = CONTEXT.replace("Rationale: The crashing write.", "");
        let err = parse_context_report(&broken).unwrap_err();
        assert!(err.0.contains("Context 1") && err.0.contains("Rationale"), "{err}");
        assert!(parse_context_report("### Insights\nx\n").is_err());
    }

    #[test]
    fn property_reports() {
        let text = "### Property 1\nAssertion:\n```c\nSAFETY_PROPERTY_ASSERT(i < NAME_CAP, idx_bound);\nbuf[i] = src[i];\n```\n\
                    Location: src/buf.c:17\nPurpose: index stays in bounds\nResult: FAIL (1 of 17 evaluations)\n\
                    Interpretation: i reaches 16.\n\n### Insights\nOff by one.\n";
        let r = parse_property_report(text).unwrap();
        assert_eq!(r.properties[0].result, AssertionResult::Fail);
        assert_eq!((r.properties[0].file.as_str(), r.properties[0].line), ("src/buf.c", 17));
        assert_eq!(parse_property_report(&render_property_report(&r)).unwrap(), r);
        assert!(parse_property_report("### Insights\nNothing.\n").is_err());
        assert!(parse_property_report("### Insights\nNo stable property found.\n").is_ok());
    }

    #[test]
    fn enhanced_report_sections() {
        let base = build_enhanced_report("crash in copy_name", None, None);
        assert_eq!(base.render(), "## Issue Report\n\ncrash in copy_name\n");
        let full = build_enhanced_report("issue\n## Property Analysis Report\n", Some("ctx"), Some("prop"));
        let text = full.render();
        let h: Vec<usize> = [ISSUE_HEADING, CONTEXT_HEADING, PROPERTY_HEADING]
            .iter()
            .map(|h| text.lines().position(|l| l == *h).unwrap())
            .collect();
        assert!(h[0] < h[1] && h[1] < h[2]);
        assert_eq!(EnhancedIssueReport::parse(&text).unwrap(), full);
    }

    fn field_text() -> impl Strategy<Value = String> {
        "[a-z][a-z ,.]{0,30}[a-z.]".prop_map(|s| s.to_string())
    }

    fn item() -> impl Strategy<Value = ContextItem> {
        (
            "[a-z_]{1,8}\\(x\\);( //[a-z ]{0,10}[a-z])?",
            "[a-z]{1,6}/[a-z]{1,6}\\.(c|h|cpp)",
            prop::option::of("[A-Za-z_][A-Za-z0-9_]{0,8}"),
            1usize..500,
            0usize..50,
            prop::option::of(0usize..30),
            field_text(),
        )
            .prop_map(|(code, file, element, start, len, frame, rationale)| ContextItem {
                code,
                source: ContextSource { file, element, lines: LineRange::new(start, start + len) },
                trace_link: frame.map_or(TraceLink::NotInTrace, TraceLink::Frame),
                rationale,
            })
    }

    proptest! {
        #[test]
        fn context_round_trip(items in prop::collection::vec(item(), 1..6), insights in field_text()) {
            let report = ContextAnalysisReport { items, insights };
            let parsed = parse_context_report(&render_context_report(&report)).unwrap();
            prop_assert_eq!(parsed, report);
        }

        #[test]
        fn enhanced_presence_is_recovered(ctx in any::<bool>(), prop in any::<bool>(), issue in "[a-z#\n ]{1,40}") {
            let r = build_enhanced_report(&issue, ctx.then_some("c"), prop.then_some("p"));
            let back = EnhancedIssueReport::parse(&r.render()).unwrap();
            prop_assert_eq!(back.context_report.is_some(), ctx);
            prop_assert_eq!(back.property_report.is_some(), prop);
        }
    }
}

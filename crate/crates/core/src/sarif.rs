//! SARIF 2.1.0 ingestion: normalize static-analysis results into findings.
//!
//! A finding is the triple the rest of the pipeline works from: a candidate
//! sink location, a natural-language description, and a data-flow trace from
//! source to sink (length 1 for local pattern findings).

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SarifError {
    #[error("document is not valid UTF-8")]
    NotUtf8,
    #[error("malformed SARIF document at byte {offset} (line {line}, column {column}): {message}")]
    Malformed {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported SARIF version {found:?} (expected major version 2)")]
    UnsupportedVersion { found: String },
    #[error("document has no runs array")]
    NoRuns,
}

/// A source position inside the project tree. Lines and columns are 1-based;
/// the file path is project-relative with `.`/`..` resolved away.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceLocation {
    pub file: String,
    pub line: u32,
    pub column_start: Option<u32>,
    pub column_end: Option<u32>,
}

impl SourceLocation {
    pub fn new(
        file: &str,
        line: u32,
        column_start: Option<u32>,
        column_end: Option<u32>,
    ) -> Option<Self> {
        let file = normalize_uri(file)?;
        if line < 1 {
            return None;
        }
        if let Some(c) = column_start {
            if c < 1 {
                return None;
            }
        }
        Some(Self {
            file,
            line,
            column_start,
            column_end,
        })
    }
}

impl fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)?;
        if let Some(c) = self.column_start {
            write!(f, ":{c}")?;
        }
        Ok(())
    }
}

/// One normalized static-analysis result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    /// Analyzer rule identifier, e.g. `local/cpp/cwe-120-overflow`.
    pub rule_id: String,
    /// The sink: the suspected vulnerable statement.
    pub location: SourceLocation,
    /// Natural-language description of the suspected vulnerability.
    pub description: String,
    /// Ordered data-flow trace ending at the sink. Length 1 for local
    /// pattern-based findings.
    pub trace: Vec<SourceLocation>,
    /// Source text at the sink, when the analyzer included it.
    pub snippet: Option<String>,
}

/// CWE number recovered from a rule identifier. Absence of a parseable CWE is
/// represented by the caller holding no tag at all, never by a zero id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CweTag {
    pub cwe_id: u32,
    pub raw_rule: String,
}

/// Result of parsing one SARIF document: the findings that survived
/// normalization plus a count of skipped result entries.
#[derive(Debug, Clone, Default)]
pub struct SarifParse {
    pub findings: Vec<Finding>,
    pub skipped: usize,
}

/// Parse a SARIF 2.1.0 document. Results lacking a usable physical location,
/// message, or rule id are skipped and counted rather than failing the parse.
/// All runs in a multi-run file are concatenated in order.
pub fn parse_sarif(bytes: &[u8]) -> Result<SarifParse, SarifError> {
    let text = std::str::from_utf8(bytes).map_err(|_| SarifError::NotUtf8)?;
    let doc: Value = serde_json::from_str(text).map_err(|e| {
        let (line, column) = (e.line(), e.column());
        SarifError::Malformed {
            offset: byte_offset(text, line, column),
            line,
            column,
            message: e.to_string(),
        }
    })?;

    let version = doc
        .get("version")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let major = version.split('.').next().unwrap_or("");
    if major != "2" {
        return Err(SarifError::UnsupportedVersion { found: version });
    }

    let runs = doc
        .get("runs")
        .and_then(Value::as_array)
        .ok_or(SarifError::NoRuns)?;

    let mut out = SarifParse::default();
    for run in runs {
        let rules = run
            .get("tool")
            .and_then(|t| t.get("driver"))
            .and_then(|d| d.get("rules"))
            .and_then(Value::as_array);
        let results = match run.get("results").and_then(Value::as_array) {
            Some(r) => r,
            None => continue,
        };
        for result in results {
            match normalize_result(result, rules) {
                Some(f) => out.findings.push(f),
                None => out.skipped += 1,
            }
        }
    }
    Ok(out)
}

fn normalize_result(result: &Value, rules: Option<&Vec<Value>>) -> Option<Finding> {
    let rule_id = result
        .get("ruleId")
        .and_then(Value::as_str)
        .map(str::to_string)
        .or_else(|| {
            let idx = result.get("ruleIndex").and_then(Value::as_u64)? as usize;
            rules?
                .get(idx)?
                .get("id")
                .and_then(Value::as_str)
                .map(str::to_string)
        })?;

    let description = result
        .get("message")
        .and_then(|m| m.get("text"))
        .and_then(Value::as_str)?
        .to_string();

    let loc_value = result
        .get("locations")
        .and_then(Value::as_array)
        .and_then(|l| l.first())?;
    let location = physical_location(loc_value)?;
    let snippet = loc_value
        .get("physicalLocation")
        .and_then(|p| p.get("region"))
        .and_then(|r| r.get("snippet"))
        .and_then(|s| s.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string);

    let mut trace: Vec<SourceLocation> = result
        .get("codeFlows")
        .and_then(Value::as_array)
        .and_then(|f| f.first())
        .and_then(|f| f.get("threadFlows"))
        .and_then(Value::as_array)
        .and_then(|t| t.first())
        .and_then(|t| t.get("locations"))
        .and_then(Value::as_array)
        .map(|locs| {
            locs.iter()
                .filter_map(|l| physical_location(l.get("location")?))
                .collect()
        })
        .unwrap_or_default();

    if trace.is_empty() {
        trace.push(location.clone());
    } else if trace.last() != Some(&location) {
        trace.push(location.clone());
    }

    Some(Finding {
        rule_id,
        location,
        description,
        trace,
        snippet,
    })
}

fn physical_location(value: &Value) -> Option<SourceLocation> {
    let phys = value.get("physicalLocation")?;
    let uri = phys
        .get("artifactLocation")
        .and_then(|a| a.get("uri"))
        .and_then(Value::as_str)?;
    let region = phys.get("region")?;
    let line = region.get("startLine").and_then(Value::as_u64)? as u32;
    let column_start = region
        .get("startColumn")
        .and_then(Value::as_u64)
        .map(|c| c as u32);
    let column_end = region
        .get("endColumn")
        .and_then(Value::as_u64)
        .map(|c| c as u32);
    SourceLocation::new(uri, line, column_start, column_end)
}

/// Extract the first `cwe-<digits>` tag (case-insensitive) from a rule id.
pub fn extract_cwe(rule_id: &str) -> Option<CweTag> {
    let re = cwe_regex();
    for cap in re.captures_iter(rule_id) {
        if let Ok(n) = cap[1].parse::<u32>() {
            if n > 0 {
                return Some(CweTag {
                    cwe_id: n,
                    raw_rule: rule_id.to_string(),
                });
            }
        }
    }
    None
}

fn cwe_regex() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"(?i)cwe-(\d+)").expect("cwe regex"))
}

/// Strip `file://` prefixes, percent-decoding, and `.`/`..` components.
/// Returns `None` when the path is empty or escapes upward.
fn normalize_uri(uri: &str) -> Option<String> {
    let uri = uri.strip_prefix("file://").unwrap_or(uri);
    let decoded = percent_decode(uri);
    let mut parts: Vec<&str> = Vec::new();
    for comp in decoded.split('/') {
        match comp {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            other => parts.push(other),
        }
    }
    if parts.is_empty() {
        return None;
    }
    Some(parts.join("/"))
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(v) = u8::from_str_radix(&s[i + 1..i + 3], 16) {
                out.push(v);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut remaining = line.saturating_sub(1);
    let mut offset = 0;
    for l in text.split_inclusive('\n') {
        if remaining == 0 {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
        remaining -= 1;
    }
    offset
}

/// Line-delimited JSON record: the normalized finding format exchanged
/// between pipeline phases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingRecord {
    pub rule_id: String,
    pub file: String,
    pub line: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<u32>,
    pub message: String,
    pub trace: Vec<TracePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snippet: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TracePoint {
    pub file: String,
    pub line: u32,
}

impl From<&Finding> for FindingRecord {
    fn from(f: &Finding) -> Self {
        FindingRecord {
            rule_id: f.rule_id.clone(),
            file: f.location.file.clone(),
            line: f.location.line,
            column: f.location.column_start,
            message: f.description.clone(),
            trace: f
                .trace
                .iter()
                .map(|t| TracePoint {
                    file: t.file.clone(),
                    line: t.line,
                })
                .collect(),
            snippet: f.snippet.clone(),
        }
    }
}

impl FindingRecord {
    pub fn into_finding(self) -> Finding {
        let location = SourceLocation {
            file: self.file,
            line: self.line,
            column_start: self.column,
            column_end: None,
        };
        Finding {
            rule_id: self.rule_id,
            description: self.message,
            trace: self
                .trace
                .iter()
                .map(|t| SourceLocation {
                    file: t.file.clone(),
                    line: t.line,
                    column_start: None,
                    column_end: None,
                })
                .collect(),
            snippet: self.snippet,
            location,
        }
    }
}

/// Serialize findings to the line-delimited record format.
pub fn write_records(findings: &[Finding]) -> String {
    let mut out = String::new();
    for f in findings {
        let record = FindingRecord::from(f);
        out.push_str(&serde_json::to_string(&record).expect("finding record serializes"));
        out.push('\n');
    }
    out
}

/// Read back line-delimited finding records. Blank lines are ignored.
pub fn read_records(text: &str) -> Result<Vec<FindingRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Normalized file path type used in error contexts.
pub type RelPath = PathBuf;

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_sarif(results: &str) -> String {
        format!(
            r#"{{"version":"2.1.0","$schema":"https://json.schemastore.org/sarif-2.1.0.json",
"runs":[{{"tool":{{"driver":{{"name":"codeql","rules":[{{"id":"local/cpp/cwe-120-overflow"}}]}}}},
"results":[{results}]}}]}}"#
        )
    }

    #[test]
    fn parses_single_result() {
        let doc = minimal_sarif(
            r#"{"ruleId":"local/cpp/cwe-120-overflow",
                "message":{"text":"CWE-120: Buffer Overflow via memcpy (unchecked length)."},
                "locations":[{"physicalLocation":{"artifactLocation":{"uri":"elfxx-x86.c"},
                "region":{"startLine":2699,"startColumn":7}}}]}"#,
        );
        let parsed = parse_sarif(doc.as_bytes()).unwrap();
        assert_eq!(parsed.skipped, 0);
        assert_eq!(parsed.findings.len(), 1);
        let f = &parsed.findings[0];
        assert_eq!(f.rule_id, "local/cpp/cwe-120-overflow");
        assert_eq!(f.location.file, "elfxx-x86.c");
        assert_eq!(f.location.line, 2699);
        assert_eq!(
            f.description,
            "CWE-120: Buffer Overflow via memcpy (unchecked length)."
        );
        assert_eq!(f.trace, vec![f.location.clone()]);
    }

    #[test]
    fn empty_results_give_empty_list() {
        let doc = r#"{"version":"2.1.0","runs":[{"tool":{"driver":{"name":"x"}},"results":[]}]}"#;
        let parsed = parse_sarif(doc.as_bytes()).unwrap();
        assert!(parsed.findings.is_empty());
        assert_eq!(parsed.skipped, 0);
    }

    #[test]
    fn thread_flow_trace_ends_at_sink() {
        let doc = minimal_sarif(
            r#"{"ruleId":"cpp/use-after-free",
                "message":{"text":"use after free"},
                "locations":[{"physicalLocation":{"artifactLocation":{"uri":"a.c"},"region":{"startLine":30}}}],
                "codeFlows":[{"threadFlows":[{"locations":[
                  {"location":{"physicalLocation":{"artifactLocation":{"uri":"a.c"},"region":{"startLine":10}}}},
                  {"location":{"physicalLocation":{"artifactLocation":{"uri":"a.c"},"region":{"startLine":20}}}},
                  {"location":{"physicalLocation":{"artifactLocation":{"uri":"a.c"},"region":{"startLine":30}}}}
                ]}]}]}"#,
        );
        let parsed = parse_sarif(doc.as_bytes()).unwrap();
        let f = &parsed.findings[0];
        assert_eq!(f.trace.len(), 3);
        assert_eq!(f.trace.last(), Some(&f.location));
    }

    #[test]
    fn sink_appended_when_flow_stops_short() {
        let doc = minimal_sarif(
            r#"{"ruleId":"cpp/use-after-free",
                "message":{"text":"use after free"},
                "locations":[{"physicalLocation":{"artifactLocation":{"uri":"a.c"},"region":{"startLine":30}}}],
                "codeFlows":[{"threadFlows":[{"locations":[
                  {"location":{"physicalLocation":{"artifactLocation":{"uri":"a.c"},"region":{"startLine":10}}}}
                ]}]}]}"#,
        );
        let parsed = parse_sarif(doc.as_bytes()).unwrap();
        let f = &parsed.findings[0];
        assert_eq!(f.trace.len(), 2);
        assert_eq!(f.trace.last(), Some(&f.location));
    }

    #[test]
    fn missing_location_skipped_and_counted() {
        let doc = minimal_sarif(r#"{"ruleId":"r","message":{"text":"no location"}}"#);
        let parsed = parse_sarif(doc.as_bytes()).unwrap();
        assert!(parsed.findings.is_empty());
        assert_eq!(parsed.skipped, 1);
    }

    #[test]
    fn rule_id_falls_back_to_rule_index() {
        let doc = minimal_sarif(
            r#"{"ruleIndex":0,"message":{"text":"m"},
                "locations":[{"physicalLocation":{"artifactLocation":{"uri":"a.c"},"region":{"startLine":1}}}]}"#,
        );
        let parsed = parse_sarif(doc.as_bytes()).unwrap();
        assert_eq!(parsed.findings[0].rule_id, "local/cpp/cwe-120-overflow");
    }

    #[test]
    fn result_without_any_rule_id_skipped() {
        let doc = minimal_sarif(
            r#"{"message":{"text":"m"},
                "locations":[{"physicalLocation":{"artifactLocation":{"uri":"a.c"},"region":{"startLine":1}}}]}"#,
        );
        let parsed = parse_sarif(doc.as_bytes()).unwrap();
        assert!(parsed.findings.is_empty());
        assert_eq!(parsed.skipped, 1);
    }

    #[test]
    fn malformed_reports_byte_offset() {
        let doc = "{\"version\": \"2.1.0\",\n  broken";
        match parse_sarif(doc.as_bytes()) {
            Err(SarifError::Malformed { offset, line, .. }) => {
                assert_eq!(line, 2);
                assert!(offset > 20, "offset {offset} should be on line 2");
            }
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn version_gate() {
        let doc = r#"{"version":"1.0.0","runs":[]}"#;
        assert!(matches!(
            parse_sarif(doc.as_bytes()),
            Err(SarifError::UnsupportedVersion { .. })
        ));
    }

    #[test]
    fn multi_run_concatenates() {
        let doc = r#"{"version":"2.1.0","runs":[
          {"tool":{"driver":{"name":"a"}},"results":[
            {"ruleId":"r1","message":{"text":"m"},"locations":[{"physicalLocation":{"artifactLocation":{"uri":"a.c"},"region":{"startLine":1}}}]}]},
          {"tool":{"driver":{"name":"b"}},"results":[
            {"ruleId":"r2","message":{"text":"m"},"locations":[{"physicalLocation":{"artifactLocation":{"uri":"b.c"},"region":{"startLine":2}}}]}]}
        ]}"#;
        let parsed = parse_sarif(doc.as_bytes()).unwrap();
        let ids: Vec<_> = parsed.findings.iter().map(|f| f.rule_id.as_str()).collect();
        assert_eq!(ids, vec!["r1", "r2"]);
    }

    #[test]
    fn uri_normalization() {
        assert_eq!(normalize_uri("file:///a/b.c"), Some("a/b.c".into()));
        assert_eq!(normalize_uri("./x/./y.c"), Some("x/y.c".into()));
        assert_eq!(normalize_uri("a/../b.c"), Some("b.c".into()));
        assert_eq!(normalize_uri("../b.c"), None);
        assert_eq!(normalize_uri(""), None);
        assert_eq!(normalize_uri("a%20b/c.c"), Some("a b/c.c".into()));
    }

    #[test]
    fn cwe_extraction() {
        assert_eq!(extract_cwe("local/cpp/cwe-120-overflow").unwrap().cwe_id, 120);
        assert_eq!(extract_cwe("CWE-416-variant-3").unwrap().cwe_id, 416);
        assert!(extract_cwe("cpp/use-after-free").is_none());
        assert!(extract_cwe("cwe-0-nothing").is_none());
        assert_eq!(extract_cwe("cwe-0-then-cwe-5").unwrap().cwe_id, 5);
    }

    #[test]
    fn record_round_trip() {
        let doc = minimal_sarif(
            r#"{"ruleId":"local/cpp/cwe-120-overflow",
                "message":{"text":"m"},
                "locations":[{"physicalLocation":{"artifactLocation":{"uri":"x.c"},
                "region":{"startLine":3,"startColumn":2,
                "snippet":{"text":"memcpy(a,b,n);"}}}}]}"#,
        );
        let parsed = parse_sarif(doc.as_bytes()).unwrap();
        let ndjson = write_records(&parsed.findings);
        let records = read_records(&ndjson).unwrap();
        let again = write_records(
            &records
                .iter()
                .map(|r| r.clone().into_finding())
                .collect::<Vec<_>>(),
        );
        assert_eq!(ndjson, again);
    }
}

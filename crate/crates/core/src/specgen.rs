//! Vulnerability specification assembly: combine a finding, its fact pack,
//! an entrypoint selection, and a per-CWE assertion template into one
//! self-contained JSON target, then filter out non-actionable targets.

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::callgraph::{select_entrypoint, CallGraph, EntrypointSelection, EntrypointStrategy};
use crate::facts::{BuildContext, FactPack};
use crate::filter::FilterRules;
use crate::sarif::{extract_cwe, Finding, TracePoint};

/// Assertion condition families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssertionFamily {
    Oob,
    Uaf,
    StalePtr,
    NullDeref,
    IntOverflow,
    OobOffset,
    StackReturn,
    Recursion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionTemplate {
    pub cwe_ids: Vec<u32>,
    pub template: String,
    pub family: AssertionFamily,
}

const TEMPLATE_TABLE: &[(&[u32], &str, AssertionFamily)] = &[
    (
        &[120, 121, 125, 787],
        "n <= min(len(dst), len(src))",
        AssertionFamily::Oob,
    ),
    (&[415, 416], "no use of p after free(p)", AssertionFamily::Uaf),
    (
        &[476],
        "p != NULL before *p",
        AssertionFamily::NullDeref,
    ),
    (
        &[190],
        "arithmetic within type range",
        AssertionFamily::IntOverflow,
    ),
    (
        &[823],
        "offset within allocation bounds",
        AssertionFamily::OobOffset,
    ),
    (
        &[562],
        "no return of stack-local address",
        AssertionFamily::StackReturn,
    ),
    (
        &[674],
        "recursion depth bounded",
        AssertionFamily::Recursion,
    ),
];

const STALE_PTR_TEMPLATE: &str = "p not dereferenced after realloc/free";

/// Per-CWE assertion template lookup. CWE-416 rule variants whose rule id
/// mentions stale pointers or realloc get the stale-pointer condition; the
/// plain use-after-free condition otherwise. Unlisted CWEs return `None` and
/// the property is later derived from the finding description.
pub fn lookup_assertion_template(cwe: Option<&crate::sarif::CweTag>) -> Option<AssertionTemplate> {
    let cwe = cwe?;
    if cwe.cwe_id == 416 {
        let stale = regex::Regex::new(r"(?i)(stale|realloc|type-conf|lifetime)")
            .expect("stale regex")
            .is_match(&cwe.raw_rule);
        if stale {
            return Some(AssertionTemplate {
                cwe_ids: vec![416],
                template: STALE_PTR_TEMPLATE.to_string(),
                family: AssertionFamily::StalePtr,
            });
        }
    }
    TEMPLATE_TABLE
        .iter()
        .find(|(ids, _, _)| ids.contains(&cwe.cwe_id))
        .map(|(ids, template, family)| AssertionTemplate {
            cwe_ids: ids.to_vec(),
            template: template.to_string(),
            family: *family,
        })
}

/// A self-contained symbolic-execution target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnSpec {
    pub spec_id: String,
    pub rule_id: String,
    pub file: String,
    pub line: u32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snippet: Option<String>,
    pub suspect_calls: Vec<String>,
    /// Enclosing function of the sink; the upward entrypoint search starts
    /// here. Absent when no enclosing function was found.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    pub entrypoint: EntrypointSelection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assertion_template: Option<AssertionTemplate>,
    pub build_context: BuildContext,
    pub trace: Vec<TracePoint>,
    /// Early-exit guard conditions near the sink, rendered `var=NULL`,
    /// derived from null-comparison bounds hints.
    pub guards: Vec<String>,
}

/// Stable hex identifier for a finding: SHA-256 over the canonicalized
/// (rule_id, file, line) triple, truncated to 16 hex characters.
pub fn spec_id(rule_id: &str, file: &str, line: u32) -> String {
    let mut hasher = Sha256::new();
    hasher.update(rule_id.as_bytes());
    hasher.update([0]);
    hasher.update(file.as_bytes());
    hasher.update([0]);
    hasher.update(line.to_string().as_bytes());
    hex::encode(&hasher.finalize()[..8])
}

/// Pull `var=NULL` guard instantiations out of bounds hints shaped like
/// `expr != NULL` / `expr == NULL`.
pub fn guards_from_bounds_hints(hints: &[String]) -> Vec<String> {
    let re = regex::Regex::new(
        r"^(?P<expr>.+?)\s*(?:!=|==)\s*NULL$|^NULL\s*(?:!=|==)\s*(?P<rexpr>.+)$",
    )
    .expect("guard regex");
    let tail = regex::Regex::new(r"([A-Za-z_][A-Za-z0-9_]*)\s*$").expect("tail regex");
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for hint in hints {
        let Some(cap) = re.captures(hint.trim()) else {
            continue;
        };
        let expr = cap
            .name("expr")
            .or_else(|| cap.name("rexpr"))
            .map(|m| m.as_str())
            .unwrap_or("");
        if let Some(t) = tail.captures(expr) {
            let guard = format!("{}=NULL", &t[1]);
            if seen.insert(guard.clone()) {
                out.push(guard);
            }
        }
    }
    out
}

/// Assemble one specification from its parts.
pub fn assemble_spec(
    finding: &Finding,
    facts: &FactPack,
    graph: &CallGraph,
    strategy: &EntrypointStrategy,
    build: &BuildContext,
) -> VulnSpec {
    let vuln_fn = facts
        .function
        .clone()
        .unwrap_or_else(|| finding.location.file.clone());
    let entrypoint = select_entrypoint(&vuln_fn, graph, strategy);
    let cwe = extract_cwe(&finding.rule_id);
    let assertion_template = lookup_assertion_template(cwe.as_ref());
    VulnSpec {
        spec_id: spec_id(&finding.rule_id, &finding.location.file, finding.location.line),
        rule_id: finding.rule_id.clone(),
        file: finding.location.file.clone(),
        line: finding.location.line,
        message: finding.description.clone(),
        snippet: finding.snippet.clone(),
        suspect_calls: facts.suspect_calls.clone(),
        function: facts.function.clone(),
        entrypoint,
        assertion_template,
        build_context: build.clone(),
        trace: finding
            .trace
            .iter()
            .map(|t| TracePoint {
                file: t.file.clone(),
                line: t.line,
            })
            .collect(),
        guards: guards_from_bounds_hints(&facts.bounds_hints),
    }
}

/// One excluded specification and the rule that removed it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExclusionRecord {
    pub spec_id: String,
    pub file: String,
    pub line: u32,
    pub reason: String,
}

/// Partition specs into active targets and exclusions. Path rules run first,
/// then function rules; every exclusion carries the matched rule.
pub fn filter_specs(
    specs: Vec<VulnSpec>,
    rules: &FilterRules,
) -> (Vec<VulnSpec>, Vec<ExclusionRecord>) {
    let mut active = Vec::new();
    let mut excluded = Vec::new();
    for spec in specs {
        let reason = rules.match_path(&spec.file).or_else(|| {
            spec.function
                .as_deref()
                .and_then(|f| rules.match_function(f))
        });
        match reason {
            Some(reason) => excluded.push(ExclusionRecord {
                spec_id: spec.spec_id.clone(),
                file: spec.file.clone(),
                line: spec.line,
                reason,
            }),
            None => active.push(spec),
        }
    }
    (active, excluded)
}

/// Render the external spec document: the finding fields, suspect calls,
/// entrypoint, assertion template (omitted when absent), the build context,
/// and the spec id, with stable key order.
pub fn emit_spec(spec: &VulnSpec) -> String {
    let mut doc = serde_json::Map::new();
    doc.insert("rule_id".into(), json!(spec.rule_id));
    doc.insert("file".into(), json!(spec.file));
    doc.insert("line".into(), json!(spec.line));
    doc.insert("message".into(), json!(spec.message));
    if let Some(snippet) = &spec.snippet {
        doc.insert("snippet".into(), json!(snippet));
    }
    doc.insert("suspect_calls".into(), json!(spec.suspect_calls));
    let entry = match &spec.entrypoint.provenance {
        crate::callgraph::EntryProvenance::Manual => json!(spec.entrypoint.name),
        _ if spec.entrypoint.overridable => json!({
            "strategy": "LLM_INFER",
            "initial": spec.entrypoint.name,
        }),
        _ => json!(spec.entrypoint.name),
    };
    doc.insert("entrypoint".into(), entry);
    if let Some(t) = &spec.assertion_template {
        doc.insert("assertion_template".into(), json!(t.template));
    }
    doc.insert(
        "build_context".into(),
        json!({
            "include_paths": spec.build_context.include_paths,
            "preprocessor_defs": spec.build_context.preprocessor_defs,
        }),
    );
    doc.insert("spec_id".into(), json!(spec.spec_id));
    serde_json::to_string_pretty(&serde_json::Value::Object(doc)).expect("spec serializes")
}

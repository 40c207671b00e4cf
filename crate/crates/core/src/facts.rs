//! Fact enrichment: regex-based extraction of code-level hints around a
//! finding, plus build-context recovery from `compile_commands.json`.
//!
//! Every extractor is total over arbitrary text and deterministic; lists are
//! deduplicated preserving first occurrence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfunc;
use crate::sarif::Finding;
use crate::snapshot::ProjectSnapshot;

#[derive(Debug, Error)]
pub enum FactError {
    #[error("line {line} out of range (file has {max} lines)")]
    LineOutOfRange { line: u32, max: u32 },
    #[error("malformed compile_commands.json: {0}")]
    MalformedCompileCommands(String),
    #[error(transparent)]
    Snapshot(#[from] crate::snapshot::SnapshotError),
}

/// Code-level hints extracted around one finding.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactPack {
    /// Call names near the sink, nearest first.
    pub suspect_calls: Vec<String>,
    pub pointer_vars: Vec<String>,
    pub length_vars: Vec<String>,
    /// Comparison expressions near the sink, verbatim.
    pub bounds_hints: Vec<String>,
    pub include_paths: Vec<String>,
    pub preprocessor_defs: Vec<String>,
    /// Name of the function enclosing the sink, when found.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
}

/// Include paths and preprocessor definitions recovered from the project's
/// compilation database.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildContext {
    pub include_paths: Vec<String>,
    pub preprocessor_defs: Vec<String>,
    /// Number of compilation entries consumed.
    pub compile_entries: usize,
}

impl BuildContext {
    /// Keep only include paths that exist under `root`; other fields pass
    /// through. Without a root the context is retained verbatim.
    pub fn verified_against(mut self, root: &std::path::Path) -> Self {
        self.include_paths.retain(|p| root.join(p).is_dir());
        self
    }
}

/// A function (or fallback window) of source text with its absolute position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub text: String,
    /// 1-based line of the first line of `text`.
    pub start_line: u32,
    pub function: Option<String>,
}

/// Number of lines kept on each side when no enclosing function is found.
pub const FALLBACK_WINDOW: u32 = 40;

/// Default proximity window (in lines) for bounds-hint extraction.
pub const BOUNDS_WINDOW: u32 = 10;

/// Extract the function containing `line`, falling back to a ±40-line window
/// when the file has no recognizable enclosing definition.
pub fn extract_enclosing_function(source: &str, line: u32) -> Result<Span, FactError> {
    let total = source.lines().count() as u32;
    if line < 1 || line > total {
        return Err(FactError::LineOutOfRange { line, max: total });
    }
    if let Some(def) = cfunc::find_enclosing(source, line) {
        let text = source[def.byte_range.0..def.byte_range.1].to_string();
        return Ok(Span {
            text,
            start_line: def.start_line,
            function: Some(def.name),
        });
    }
    let start = line.saturating_sub(FALLBACK_WINDOW).max(1);
    let end = (line + FALLBACK_WINDOW).min(total);
    let text = source
        .lines()
        .skip(start as usize - 1)
        .take((end - start + 1) as usize)
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Span {
        text,
        start_line: start,
        function: None,
    })
}

/// Call sites in the span, ranked by line distance from `location_line`.
/// Keywords never appear; macros that look like calls do.
pub fn extract_suspect_calls(span: &Span, location_line: u32) -> Vec<String> {
    let clean = cfunc::blank_comments_and_strings(&span.text);
    let re = regex::Regex::new(r"\b([A-Za-z_][A-Za-z0-9_]*)\s*\(").expect("call regex");
    let mut hits: Vec<(u32, usize, String)> = Vec::new();
    for (idx, line_text) in clean.lines().enumerate() {
        let abs_line = span.start_line + idx as u32;
        for cap in re.captures_iter(line_text) {
            let name = cap[1].to_string();
            if cfunc::is_c_keyword(&name) {
                continue;
            }
            // The span's own definition header matches the call shape.
            if span.function.as_deref() == Some(name.as_str()) {
                continue;
            }
            let dist = abs_line.abs_diff(location_line);
            hits.push((dist, hits.len(), name));
        }
    }
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut seen = std::collections::HashSet::new();
    hits.into_iter()
        .filter_map(|(_, _, name)| seen.insert(name.clone()).then_some(name))
        .collect()
}

/// Pointer variables from `T *name` / `T name[...]` declaration shapes and
/// identifiers whose names follow length conventions.
pub fn extract_pointer_and_length_vars(span: &Span) -> (Vec<String>, Vec<String>) {
    let clean = cfunc::blank_comments_and_strings(&span.text);
    let ptr_decl = regex::Regex::new(
        r"\b[A-Za-z_][A-Za-z0-9_]*\s*\*+\s*([A-Za-z_][A-Za-z0-9_]*)\s*[;=,\)\[]",
    )
    .expect("ptr regex");
    let arr_decl = regex::Regex::new(
        r"\b[A-Za-z_][A-Za-z0-9_]*\s+([A-Za-z_][A-Za-z0-9_]*)\s*\[",
    )
    .expect("array regex");
    let ident = regex::Regex::new(r"\b([A-Za-z_][A-Za-z0-9_]*)\b").expect("ident regex");
    let len_name = regex::Regex::new(r"(?i)(len|size|count|capacity)").expect("len regex");

    let mut pointers = Vec::new();
    let mut seen_p = std::collections::HashSet::new();
    for cap in ptr_decl.captures_iter(&clean).chain(arr_decl.captures_iter(&clean)) {
        let name = cap[1].to_string();
        if cfunc::is_c_keyword(&name) {
            continue;
        }
        if seen_p.insert(name.clone()) {
            pointers.push(name);
        }
    }

    let mut lengths = Vec::new();
    let mut seen_l = std::collections::HashSet::new();
    for cap in ident.captures_iter(&clean) {
        let name = cap[1].to_string();
        if cfunc::is_c_keyword(&name) || !len_name.is_match(&name) {
            continue;
        }
        // `size_t` and friends are types, not length variables.
        if name.ends_with("_t") {
            continue;
        }
        if seen_l.insert(name.clone()) {
            lengths.push(name);
        }
    }
    (pointers, lengths)
}

/// Comparison expressions within `window` lines of the sink, verbatim.
pub fn extract_bounds_hints(span: &Span, location_line: u32, window: u32) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, raw_line) in span.text.lines().enumerate() {
        let abs_line = span.start_line + idx as u32;
        if abs_line.abs_diff(location_line) > window {
            continue;
        }
        for expr in comparisons_in_line(raw_line) {
            if seen.insert(expr.clone()) {
                out.push(expr);
            }
        }
    }
    out
}

/// Find comparison expressions in one line, skipping `->`, `<<`, and `>>`.
fn comparisons_in_line(line: &str) -> Vec<String> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let next = bytes.get(i + 1).copied().unwrap_or(0);
        let prev = if i > 0 { bytes[i - 1] } else { 0 };
        let (is_cmp, op_len) = match (b, next) {
            (b'<', b'=') | (b'>', b'=') | (b'=', b'=') | (b'!', b'=') => (true, 2),
            (b'<', b'<') | (b'>', b'>') => (false, 2),
            (b'-', b'>') => (false, 2),
            (b'<', _) | (b'>', _) => (prev != b'<' && prev != b'>' && prev != b'-', 1),
            _ => (false, 1),
        };
        if !is_cmp {
            i += op_len.max(1);
            continue;
        }
        let left = expand_left(line, i);
        let right = expand_right(line, i + op_len);
        i += op_len;
        let expr = format!(
            "{} {} {}",
            left.trim(),
            &line[i - op_len..i],
            right.trim()
        );
        if !left.trim().is_empty() && !right.trim().is_empty() {
            out.push(expr);
        }
    }
    out
}

fn expand_left(line: &str, op_start: usize) -> &str {
    let bytes = line.as_bytes();
    let mut j = op_start;
    while j > 0 {
        let c = bytes[j - 1];
        if matches!(c, b'(' | b';' | b',' | b'{' | b'=' | b'&' | b'|' | b'!' | b'?' | b':') {
            // `->` must not stop expansion; handled by the caller shape since
            // `>` inside `->` never starts an operator here.
            break;
        }
        j -= 1;
    }
    &line[j..op_start]
}

fn expand_right(line: &str, op_end: usize) -> &str {
    let bytes = line.as_bytes();
    let mut j = op_end;
    let mut depth = 0i32;
    while j < bytes.len() {
        let c = bytes[j];
        match c {
            b'(' => depth += 1,
            b')' => {
                if depth == 0 {
                    break;
                }
                depth -= 1;
            }
            b';' | b',' | b'{' | b'}' | b'?' | b':' => break,
            b'&' | b'|' if bytes.get(j + 1) == Some(&c) => break,
            _ => {}
        }
        j += 1;
    }
    &line[op_end..j]
}

/// Parse a clang compilation database. Returns the merged build context and
/// the number of entries skipped for lacking both command forms.
pub fn parse_compile_commands(bytes: &[u8]) -> Result<(BuildContext, usize), FactError> {
    #[derive(Deserialize)]
    struct Entry {
        command: Option<String>,
        arguments: Option<Vec<String>>,
    }
    let entries: Vec<Entry> = serde_json::from_slice(bytes)
        .map_err(|e| FactError::MalformedCompileCommands(e.to_string()))?;

    let mut ctx = BuildContext::default();
    let mut skipped = 0usize;
    let mut seen_inc = std::collections::HashSet::new();
    let mut seen_def = std::collections::HashSet::new();
    for entry in entries {
        let args: Vec<String> = if let Some(args) = entry.arguments {
            args
        } else if let Some(cmd) = entry.command {
            shell_split(&cmd)
        } else {
            skipped += 1;
            continue;
        };
        ctx.compile_entries += 1;
        let mut it = args.into_iter().peekable();
        while let Some(arg) = it.next() {
            for (flag, bucket, seen) in [
                ("-I", &mut ctx.include_paths, &mut seen_inc),
                ("-D", &mut ctx.preprocessor_defs, &mut seen_def),
            ] {
                if let Some(rest) = arg.strip_prefix(flag) {
                    let value = if rest.is_empty() {
                        match it.peek() {
                            Some(v) => {
                                let v = v.clone();
                                it.next();
                                v
                            }
                            None => continue,
                        }
                    } else {
                        rest.to_string()
                    };
                    if seen.insert(value.clone()) {
                        bucket.push(value);
                    }
                }
            }
        }
    }
    Ok((ctx, skipped))
}

/// Minimal shell-style splitting: whitespace-separated with single/double
/// quote grouping. Good enough for compiler command lines.
fn shell_split(cmd: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    for c in cmd.chars() {
        match quote {
            Some(q) => {
                if c == q {
                    quote = None;
                } else {
                    cur.push(c);
                }
            }
            None => match c {
                '\'' | '"' => quote = Some(c),
                c if c.is_whitespace() => {
                    if !cur.is_empty() {
                        out.push(std::mem::take(&mut cur));
                    }
                }
                _ => cur.push(c),
            },
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Enrich one finding into a fact pack using the snapshot and build context.
pub fn enrich(
    finding: &Finding,
    snapshot: &ProjectSnapshot,
    build: &BuildContext,
    bounds_window: u32,
) -> Result<FactPack, FactError> {
    let source = snapshot.read(&finding.location.file)?;
    let span = extract_enclosing_function(&source, finding.location.line)?;
    let suspect_calls = extract_suspect_calls(&span, finding.location.line);
    let (pointer_vars, length_vars) = extract_pointer_and_length_vars(&span);
    let bounds_hints = extract_bounds_hints(&span, finding.location.line, bounds_window);
    Ok(FactPack {
        suspect_calls,
        pointer_vars,
        length_vars,
        bounds_hints,
        include_paths: build.include_paths.clone(),
        preprocessor_defs: build.preprocessor_defs.clone(),
        function: span.function,
    })
}

//! Execution of the model's source-exploration and harness-editing tool
//! calls, confined to the project snapshot (reads) and the session working
//! directory (writes).

use std::path::Path;

use thiserror::Error;

use crate::cfunc;
use crate::llm::{ToolCall, ToolName};
use crate::snapshot::{confine, write_confined, ProjectSnapshot, SnapshotError};

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("sandbox violation: {0}")]
    Sandbox(#[from] SnapshotError),
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("no definition found for {0:?}")]
    NotFound(String),
    #[error("modify_file: pattern not found in {path:?}")]
    NoMatch { path: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Result caps bounding context growth.
#[derive(Debug, Clone, Copy)]
pub struct ToolCaps {
    pub search_hits: usize,
    pub read_lines: usize,
}

impl Default for ToolCaps {
    fn default() -> Self {
        Self {
            search_hits: 200,
            read_lines: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolOutcome {
    pub text: String,
    pub truncated: bool,
}

impl ToolOutcome {
    fn plain(text: String) -> Self {
        Self {
            text,
            truncated: false,
        }
    }
}

fn arg<'a>(call: &'a ToolCall, key: &str) -> Result<&'a str, ToolError> {
    call.args
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| ToolError::BadArgs(format!("missing argument {key:?}")))
}

fn opt_line(call: &ToolCall, key: &str) -> Result<Option<usize>, ToolError> {
    match call.args.get(key) {
        None => Ok(None),
        Some(raw) if raw.trim().is_empty() => Ok(None),
        Some(raw) => raw
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| ToolError::BadArgs(format!("{key} must be a line number, got {raw:?}"))),
    }
}

/// Execute one tool call. Reads never leave the snapshot; writes never leave
/// the workdir.
pub fn execute_tool_call(
    call: &ToolCall,
    snapshot: &ProjectSnapshot,
    workdir: &Path,
    caps: ToolCaps,
) -> Result<ToolOutcome, ToolError> {
    match call.name {
        ToolName::SourceSearch => source_search(call, snapshot, caps),
        ToolName::SourceRead => source_read(call, snapshot, caps),
        ToolName::SourceExtract => source_extract(call, snapshot, caps),
        ToolName::WriteFile => write_file(call, workdir),
        ToolName::ModifyFile => modify_file(call, workdir),
    }
}

fn source_search(
    call: &ToolCall,
    snapshot: &ProjectSnapshot,
    caps: ToolCaps,
) -> Result<ToolOutcome, ToolError> {
    let pattern = arg(call, "pattern")?;
    let re = regex::Regex::new(pattern)
        .map_err(|e| ToolError::BadArgs(format!("bad pattern: {e}")))?;
    let mut hits = Vec::new();
    let mut truncated = false;
    'files: for file in snapshot.files() {
        let Ok(text) = snapshot.read(file) else {
            continue; // binary or unreadable files are not searchable
        };
        for (idx, line) in text.lines().enumerate() {
            if re.is_match(line) {
                if hits.len() >= caps.search_hits {
                    truncated = true;
                    break 'files;
                }
                hits.push(format!("{}:{}:{}", file.display(), idx + 1, line.trim_end()));
            }
        }
    }
    let mut text = hits.join("\n");
    if truncated {
        text.push_str("\n[result truncated: hit cap reached]");
    }
    if text.is_empty() {
        text = "(no matches)".to_string();
    }
    Ok(ToolOutcome { text, truncated })
}

fn source_read(
    call: &ToolCall,
    snapshot: &ProjectSnapshot,
    caps: ToolCaps,
) -> Result<ToolOutcome, ToolError> {
    let path = arg(call, "path")?;
    let text = snapshot.read(path)?;
    let start = opt_line(call, "start_line")?.unwrap_or(1).max(1);
    let end = opt_line(call, "end_line")?.unwrap_or(usize::MAX);
    if end < start {
        return Err(ToolError::BadArgs("end_line before start_line".into()));
    }
    let mut out = String::new();
    let mut emitted = 0usize;
    let mut truncated = false;
    for (idx, line) in text.lines().enumerate() {
        let n = idx + 1;
        if n < start {
            continue;
        }
        if n > end {
            break;
        }
        if emitted >= caps.read_lines {
            truncated = true;
            break;
        }
        out.push_str(&format!("{n}: {line}\n"));
        emitted += 1;
    }
    if truncated {
        out.push_str("[result truncated: line cap reached]\n");
    }
    Ok(ToolOutcome {
        text: out,
        truncated,
    })
}

fn source_extract(
    call: &ToolCall,
    snapshot: &ProjectSnapshot,
    caps: ToolCaps,
) -> Result<ToolOutcome, ToolError> {
    let name = arg(call, "name")?;
    for file in snapshot.source_files() {
        let Ok(text) = snapshot.read(file) else {
            continue;
        };
        if let Some(def) = cfunc::scan_functions(&text).into_iter().find(|d| d.name == name) {
            let body = &text[def.byte_range.0..def.byte_range.1];
            return Ok(cap_lines(
                format!("{}:{}:\n{}", file.display(), def.start_line, body),
                caps.read_lines,
            ));
        }
        if let Some((line, body)) = cfunc::extract_type_definition(&text, name) {
            return Ok(cap_lines(
                format!("{}:{}:\n{}", file.display(), line, body),
                caps.read_lines,
            ));
        }
    }
    Err(ToolError::NotFound(name.to_string()))
}

fn cap_lines(text: String, max_lines: usize) -> ToolOutcome {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() <= max_lines {
        return ToolOutcome::plain(text);
    }
    let mut out = lines[..max_lines].join("\n");
    out.push_str("\n[result truncated: line cap reached]");
    ToolOutcome {
        text: out,
        truncated: true,
    }
}

fn write_file(call: &ToolCall, workdir: &Path) -> Result<ToolOutcome, ToolError> {
    let path = arg(call, "path")?;
    let content = arg(call, "content")?;
    write_confined(workdir, Path::new(path), content)?;
    Ok(ToolOutcome::plain(format!(
        "wrote {} ({} bytes)",
        path,
        content.len()
    )))
}

fn modify_file(call: &ToolCall, workdir: &Path) -> Result<ToolOutcome, ToolError> {
    let path = arg(call, "path")?;
    let find = arg(call, "find")?;
    let replace = arg(call, "replace")?;
    confine(workdir, Path::new(path))?;
    let abs = workdir.join(path);
    let canon = abs
        .canonicalize()
        .map_err(|_| ToolError::Sandbox(SnapshotError::NotFound(abs.clone())))?;
    let canon_root = workdir
        .canonicalize()
        .map_err(|e| ToolError::Io(e))?;
    if !canon.starts_with(&canon_root) {
        return Err(ToolError::Sandbox(SnapshotError::PathEscape(abs)));
    }
    let text = std::fs::read_to_string(&canon)?;
    match text.find(find) {
        None => Err(ToolError::NoMatch {
            path: path.to_string(),
        }),
        Some(pos) => {
            let mut new_text = String::with_capacity(text.len());
            new_text.push_str(&text[..pos]);
            new_text.push_str(replace);
            new_text.push_str(&text[pos + find.len()..]);
            std::fs::write(&canon, &new_text)?;
            Ok(ToolOutcome::plain(format!(
                "modified {} (first occurrence replaced)",
                path
            )))
        }
    }
}

/// Chat-completion tool definitions for the provider API.
pub fn tool_schemas() -> serde_json::Value {
    fn schema(name: &str, description: &str, params: &[(&str, &str, bool)]) -> serde_json::Value {
        let mut properties = serde_json::Map::new();
        let mut required = Vec::new();
        for (pname, pdesc, req) in params {
            properties.insert(
                pname.to_string(),
                serde_json::json!({"type": "string", "description": pdesc}),
            );
            if *req {
                required.push(pname.to_string());
            }
        }
        serde_json::json!({
            "type": "function",
            "function": {
                "name": name,
                "description": description,
                "parameters": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                }
            }
        })
    }
    serde_json::Value::Array(vec![
        schema(
            "source_search",
            "Regex search over the project source; returns file:line matches.",
            &[("pattern", "regular expression", true)],
        ),
        schema(
            "source_read",
            "Read a line range of one project file.",
            &[
                ("path", "project-relative file path", true),
                ("start_line", "first line (1-based, default 1)", false),
                ("end_line", "last line (default end of file)", false),
            ],
        ),
        schema(
            "source_extract",
            "Extract the definition of a named function or type.",
            &[("name", "function, struct, union, or enum name", true)],
        ),
        schema(
            "write_file",
            "Create or replace a harness file in the session workdir.",
            &[
                ("path", "workdir-relative path, e.g. harness/driver.c", true),
                ("content", "full file contents", true),
            ],
        ),
        schema(
            "modify_file",
            "Replace the first occurrence of `find` in an existing harness file.",
            &[
                ("path", "workdir-relative path", true),
                ("find", "text to find", true),
                ("replace", "replacement text", true),
            ],
        ),
    ])
}

//! Transform a symbolic driver into a concrete replay driver.
//!
//! Each `klee_make_symbolic(&x, n, "name")` becomes a `memcpy` of the
//! matching witness object's bytes out of an emitted static array;
//! `klee_assume`/`klee_assert` calls and every other `klee_` reference are
//! removed. The transform is textual: drivers are machine-generated in a
//! constrained one-statement-per-line style, and a line that violates that
//! style is rejected rather than guessed at.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ktest::WitnessFile;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("no witness object named {symbol:?} (driver line {line})")]
    MissingWitness { symbol: String, line: usize },
    #[error(
        "size mismatch for {symbol:?}: driver declares {declared} bytes, witness has {actual}"
    )]
    SizeMismatch {
        symbol: String,
        declared: u64,
        actual: u64,
    },
    #[error("driver line {line} mixes klee_make_symbolic with other statements")]
    MultiStatementLine { line: usize },
    #[error("unsupported klee_make_symbolic shape on driver line {line}")]
    UnsupportedShape { line: usize },
    #[error("residual klee_ reference on line {line}: {text:?}")]
    ResidualIntrinsic { line: usize, text: String },
}

/// A concrete replay driver plus the substitutions that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayDriver {
    pub source: String,
    /// (symbolic object name, emitted byte-array identifier)
    pub substitutions: Vec<(String, String)>,
}

/// Rewrite `driver` against the witness. Postcondition: the result contains
/// no identifier beginning with `klee_`, and every substitution copies
/// exactly the witness object's byte length.
pub fn make_replay_driver(driver: &str, wf: &WitnessFile) -> Result<ReplayDriver, ReplayError> {
    let make_sym_re = regex::Regex::new(
        r#"klee_make_symbolic\s*\(\s*(?P<dest>[^,]+?)\s*,\s*(?P<size>[^,]+?)\s*,\s*"(?P<name>[^"]*)"\s*\)\s*;"#,
    )
    .expect("make_symbolic regex");
    let assume_assert_re =
        regex::Regex::new(r"klee_(assume|assert)\s*\([^;]*\)\s*;").expect("assume regex");
    let include_re = regex::Regex::new(r#"^\s*#\s*include\s*[<"].*klee.*[>"]"#).expect("include");
    let decl_re = regex::Regex::new(r"^\s*(extern\s+)?\w[\w\s\*]*\bklee_\w+\s*\([^;{]*\)\s*;\s*$")
        .expect("decl regex");

    let mut arrays: Vec<String> = Vec::new();
    let mut substitutions: Vec<(String, String)> = Vec::new();
    let mut body_lines: Vec<String> = Vec::new();
    let mut last_include_idx: Option<usize> = None;
    let mut needs_string_h = false;
    let mut has_string_h = false;

    for (idx, raw_line) in driver.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.to_string();

        if include_re.is_match(&line) {
            continue; // drop the engine header include
        }
        if line.contains("#include") {
            last_include_idx = Some(body_lines.len());
            if line.contains("<string.h>") || line.contains("\"string.h\"") {
                has_string_h = true;
            }
            body_lines.push(line);
            continue;
        }

        if decl_re.is_match(&line) {
            continue; // drop extern declarations of engine intrinsics
        }

        if line.contains("klee_make_symbolic") {
            let count = line.matches("klee_make_symbolic").count();
            let semis = line.matches(';').count();
            if count > 1 || semis != 1 {
                return Err(ReplayError::MultiStatementLine { line: line_no });
            }
            let cap = make_sym_re
                .captures(&line)
                .ok_or(ReplayError::UnsupportedShape { line: line_no })?;
            let dest = cap["dest"].trim().to_string();
            let size_expr = cap["size"].trim().to_string();
            let name = cap["name"].to_string();
            let object = wf
                .object(&name)
                .ok_or_else(|| ReplayError::MissingWitness {
                    symbol: name.clone(),
                    line: line_no,
                })?;
            if let Ok(declared) = size_expr.parse::<u64>() {
                if declared != object.bytes.len() as u64 {
                    return Err(ReplayError::SizeMismatch {
                        symbol: name.clone(),
                        declared,
                        actual: object.bytes.len() as u64,
                    });
                }
            }
            let array_name = format!("wit_{}", sanitize_ident(&name));
            arrays.push(render_byte_array(&array_name, &object.bytes));
            let indent: String = line.chars().take_while(|c| c.is_whitespace()).collect();
            body_lines.push(format!(
                "{indent}memcpy({dest}, {array_name}, {len});",
                len = object.bytes.len()
            ));
            substitutions.push((name, array_name));
            needs_string_h = true;
            continue;
        }

        if assume_assert_re.is_match(&line) {
            let stripped = assume_assert_re.replace_all(&line, "").to_string();
            if !stripped.trim().is_empty() {
                body_lines.push(stripped);
            }
            continue;
        }

        body_lines.push(line);
    }

    let mut out_lines: Vec<String> = Vec::new();
    let insert_at = last_include_idx.map(|i| i + 1).unwrap_or(0);
    for (i, line) in body_lines.iter().enumerate() {
        if i == insert_at {
            if needs_string_h && !has_string_h {
                out_lines.push("#include <string.h>".to_string());
            }
            if !arrays.is_empty() {
                out_lines.push(String::new());
                out_lines.extend(arrays.iter().cloned());
            }
        }
        out_lines.push(line.clone());
    }
    if body_lines.is_empty() || insert_at >= body_lines.len() {
        if needs_string_h && !has_string_h {
            out_lines.push("#include <string.h>".to_string());
        }
        out_lines.extend(arrays.iter().cloned());
    }

    let source = out_lines.join("\n") + "\n";
    for (idx, line) in source.lines().enumerate() {
        if line.contains("klee_") {
            return Err(ReplayError::ResidualIntrinsic {
                line: idx + 1,
                text: line.trim().to_string(),
            });
        }
    }
    Ok(ReplayDriver {
        source,
        substitutions,
    })
}

fn sanitize_ident(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn render_byte_array(name: &str, bytes: &[u8]) -> String {
    let mut out = format!(
        "static const unsigned char {name}[{}] = {{",
        bytes.len().max(1)
    );
    if bytes.is_empty() {
        out.push_str("0};");
        return out;
    }
    for (i, b) in bytes.iter().enumerate() {
        if i % 16 == 0 {
            out.push_str("\n    ");
        }
        out.push_str(&format!("0x{b:02x},"));
    }
    out.pop();
    out.push_str("\n};");
    out
}

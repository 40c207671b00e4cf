//! Heuristic C source scanning shared by fact extraction, call-graph
//! construction, source tools, and probe injection.
//!
//! This is deliberately not a parser. Comments and string literals are
//! blanked out (preserving offsets), braces are matched, and function
//! definitions are recognized by the `name(args) {` shape at brace depth
//! zero. Macro-heavy code produces noise, which downstream consumers
//! tolerate.

use std::sync::OnceLock;

/// A function definition found in a source file. Lines are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    pub is_static: bool,
    /// First line of the header (return type / storage class).
    pub start_line: u32,
    /// Line holding the opening brace.
    pub body_start_line: u32,
    /// Line holding the closing brace.
    pub end_line: u32,
    /// Byte range of the whole definition (header through closing brace).
    pub byte_range: (usize, usize),
    /// Byte offset of the body's opening brace.
    pub body_open_byte: usize,
}

/// Replace comment bodies and string/char literal contents with spaces,
/// keeping every newline so byte offsets and line numbers are unchanged.
pub fn blank_comments_and_strings(src: &str) -> String {
    #[derive(Clone, Copy, PartialEq)]
    enum St {
        Code,
        Line,
        Block,
        Str,
        Chr,
    }
    let bytes = src.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut st = St::Code;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let next = bytes.get(i + 1).copied().unwrap_or(0);
        match st {
            St::Code => match b {
                b'/' if next == b'/' => {
                    st = St::Line;
                    out.extend_from_slice(b"  ");
                    i += 2;
                    continue;
                }
                b'/' if next == b'*' => {
                    st = St::Block;
                    out.extend_from_slice(b"  ");
                    i += 2;
                    continue;
                }
                b'"' => {
                    st = St::Str;
                    out.push(b'"');
                    i += 1;
                    continue;
                }
                b'\'' => {
                    st = St::Chr;
                    out.push(b'\'');
                    i += 1;
                    continue;
                }
                _ => out.push(b),
            },
            St::Line => {
                if b == b'\n' {
                    st = St::Code;
                    out.push(b'\n');
                } else {
                    out.push(b' ');
                }
            }
            St::Block => {
                if b == b'*' && next == b'/' {
                    st = St::Code;
                    out.extend_from_slice(b"  ");
                    i += 2;
                    continue;
                }
                out.push(if b == b'\n' { b'\n' } else { b' ' });
            }
            St::Str => match b {
                b'\\' => {
                    out.extend_from_slice(b"  ");
                    i += 2;
                    continue;
                }
                b'"' => {
                    st = St::Code;
                    out.push(b'"');
                }
                _ => out.push(if b == b'\n' { b'\n' } else { b' ' }),
            },
            St::Chr => match b {
                b'\\' => {
                    out.extend_from_slice(b"  ");
                    i += 2;
                    continue;
                }
                b'\'' => {
                    st = St::Code;
                    out.push(b'\'');
                }
                _ => out.push(if b == b'\n' { b'\n' } else { b' ' }),
            },
        }
        i += 1;
    }
    out.truncate(bytes.len());
    String::from_utf8_lossy(&out).into_owned()
}

const HEADER_REJECT_KEYWORDS: &[&str] = &[
    "if", "for", "while", "switch", "do", "else", "return", "sizeof",
];

/// Scan a source file for function definitions.
pub fn scan_functions(src: &str) -> Vec<FunctionDef> {
    let clean = blank_comments_and_strings(src);
    let bytes = clean.as_bytes();
    let mut defs = Vec::new();
    let mut depth: i32 = 0;
    // Byte offset after the most recent top-level boundary (; } or a
    // preprocessor line); the candidate header starts there.
    let mut header_start = 0usize;
    let mut i = 0usize;
    while i < bytes.len() {
        match bytes[i] {
            b'#' if at_line_start(bytes, i) => {
                // Skip preprocessor line including continuations.
                let mut j = i;
                while j < bytes.len() {
                    if bytes[j] == b'\n' && !(j > 0 && bytes[j - 1] == b'\\') {
                        break;
                    }
                    j += 1;
                }
                i = j + 1;
                if depth == 0 {
                    header_start = i;
                }
                continue;
            }
            b';' | b'}' if depth == 0 => {
                header_start = i + 1;
            }
            b'{' => {
                if depth == 0 {
                    let header = &clean[header_start..i];
                    if let Some((name, is_static)) = parse_header(header) {
                        if let Some(close) = matching_brace(bytes, i) {
                            let hdr_trim_start =
                                header_start + leading_ws(&clean[header_start..i]);
                            defs.push(FunctionDef {
                                name,
                                is_static,
                                start_line: line_of(&clean, hdr_trim_start),
                                body_start_line: line_of(&clean, i),
                                end_line: line_of(&clean, close),
                                byte_range: (hdr_trim_start, close + 1),
                                body_open_byte: i,
                            });
                            depth = 0;
                            i = close + 1;
                            header_start = i;
                            continue;
                        }
                    }
                }
                depth += 1;
            }
            b'}' => {
                depth -= 1;
                if depth < 0 {
                    depth = 0;
                }
            }
            _ => {}
        }
        i += 1;
    }
    defs
}

fn at_line_start(bytes: &[u8], i: usize) -> bool {
    let mut j = i;
    while j > 0 {
        match bytes[j - 1] {
            b' ' | b'\t' => j -= 1,
            b'\n' => return true,
            _ => return false,
        }
    }
    true
}

fn leading_ws(s: &str) -> usize {
    s.len() - s.trim_start().len()
}

fn matching_brace(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (off, &b) in bytes[open..].iter().enumerate() {
        match b {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + off);
                }
            }
            _ => {}
        }
    }
    None
}

fn line_of(text: &str, byte: usize) -> u32 {
    text[..byte.min(text.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count() as u32
        + 1
}

/// Decide whether `header` (text between the previous top-level boundary and
/// an opening brace) looks like a C function definition, and extract its name.
fn parse_header(header: &str) -> Option<(String, bool)> {
    let trimmed = header.trim();
    if trimmed.is_empty() || !trimmed.contains('(') || !trimmed.contains(')') {
        return None;
    }
    // `struct foo {`, `enum bar {`, `typedef struct {`, initializers `= {`.
    if trimmed.starts_with("typedef") {
        return None;
    }
    if trimmed.contains('=') {
        return None;
    }
    let tag_re = tag_regex();
    if tag_re.is_match(trimmed) {
        return None;
    }
    // Last `ident (` before the parameter list is the function name.
    let name_re = name_regex();
    let last = name_re.captures_iter(trimmed).last()?;
    let name = last.get(1)?.as_str().to_string();
    if HEADER_REJECT_KEYWORDS.contains(&name.as_str()) {
        return None;
    }
    let is_static = regex::Regex::new(r"\bstatic\b")
        .expect("static regex")
        .is_match(trimmed);
    Some((name, is_static))
}

fn name_regex() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(").expect("name regex"))
}

fn tag_regex() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    // A struct/union/enum tag immediately before the brace means this is a
    // type definition, not a function.
    RE.get_or_init(|| {
        regex::Regex::new(r"(struct|union|enum)\s+[A-Za-z_][A-Za-z0-9_]*\s*$|(struct|union|enum)\s*$")
            .expect("tag regex")
    })
}

/// Find the function definition enclosing a 1-based line, if any.
pub fn find_enclosing(src: &str, line: u32) -> Option<FunctionDef> {
    scan_functions(src)
        .into_iter()
        .find(|d| d.start_line <= line && line <= d.end_line)
}

/// Extract the definition of a named struct/union/enum, including
/// `typedef struct { ... } name;` forms. Returns (1-based start line, text).
pub fn extract_type_definition(src: &str, name: &str) -> Option<(u32, String)> {
    let clean = blank_comments_and_strings(src);
    let bytes = clean.as_bytes();
    let tagged = regex::Regex::new(&format!(
        r"(?:typedef\s+)?(?:struct|union|enum)\s+{}\s*\{{",
        regex::escape(name)
    ))
    .ok()?;
    if let Some(m) = tagged.find(&clean) {
        let open = m.end() - 1;
        let close = matching_brace(bytes, open)?;
        // Include a trailing `name;` or `;` after the brace.
        let tail_end = clean[close..]
            .find(';')
            .map(|p| close + p + 1)
            .unwrap_or(close + 1);
        return Some((line_of(&clean, m.start()), src[m.start()..tail_end].to_string()));
    }
    // typedef struct { ... } name;
    let anon = regex::Regex::new(r"typedef\s+(?:struct|union|enum)\s*\{").ok()?;
    for m in anon.find_iter(&clean) {
        let open = m.end() - 1;
        let close = matching_brace(bytes, open)?;
        let tail = &clean[close + 1..];
        let tail_re = regex::Regex::new(&format!(
            r"^\s*\**\s*{}\s*;",
            regex::escape(name)
        ))
        .ok()?;
        if let Some(t) = tail_re.find(tail) {
            let end = close + 1 + t.end();
            return Some((line_of(&clean, m.start()), src[m.start()..end].to_string()));
        }
    }
    None
}

/// Full C keyword list used to filter identifier-followed-by-paren matches.
pub fn is_c_keyword(word: &str) -> bool {
    const KEYWORDS: &[&str] = &[
        "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
        "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
        "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch",
        "typedef", "union", "unsigned", "void", "volatile", "while", "_Alignas", "_Alignof",
        "_Atomic", "_Bool", "_Complex", "_Generic", "_Noreturn", "_Static_assert",
        "_Thread_local",
    ];
    KEYWORDS.contains(&word)
}

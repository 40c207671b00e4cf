//! AddressSanitizer report parsing.
//!
//! Extracts the error kind, the first stack-frame block, and the access
//! description from ASan stderr. Classification downstream needs only the
//! frame files/functions, so unsymbolized frames degrade gracefully.

use serde::{Deserialize, Serialize};

/// Sanitizer error categories.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    HeapBufferOverflow,
    StackBufferOverflow,
    UseAfterFree,
    DoubleFree,
    Segv,
    Other(String),
}

impl ErrorKind {
    fn from_reason(reason: &str) -> Self {
        match reason {
            "heap-buffer-overflow" => ErrorKind::HeapBufferOverflow,
            "stack-buffer-overflow" => ErrorKind::StackBufferOverflow,
            "heap-use-after-free" | "use-after-free" => ErrorKind::UseAfterFree,
            "double-free" => ErrorKind::DoubleFree,
            "SEGV" => ErrorKind::Segv,
            other => ErrorKind::Other(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            ErrorKind::HeapBufferOverflow => "heap-buffer-overflow",
            ErrorKind::StackBufferOverflow => "stack-buffer-overflow",
            ErrorKind::UseAfterFree => "use-after-free",
            ErrorKind::DoubleFree => "double-free",
            ErrorKind::Segv => "segv",
            ErrorKind::Other(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessDirection {
    Read,
    Write,
}

/// `READ of size 8 ...` plus the region size when the report names one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessInfo {
    pub direction: AccessDirection,
    pub size: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allocation_size: Option<u64>,
}

/// One stack frame. File and line are present only when the report was
/// symbolized with debug info.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub function: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizerTrace {
    pub error_kind: ErrorKind,
    pub frames: Vec<Frame>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub access: Option<AccessInfo>,
}

/// Parse ASan stderr. Returns `None` when no AddressSanitizer report is
/// present (clean exit or a non-sanitizer crash).
pub fn parse_sanitizer_trace(stderr: &str) -> Option<SanitizerTrace> {
    let error_re = regex::Regex::new(
        r"ERROR: AddressSanitizer:\s*(attempting\s+)?([A-Za-z0-9_-]+)",
    )
    .expect("error regex");
    let cap = error_re.captures(stderr)?;
    let reason = cap.get(2).map(|m| m.as_str()).unwrap_or("unknown");
    let error_kind = ErrorKind::from_reason(reason);
    let report = &stderr[cap.get(0).expect("match").start()..];

    let access_re = regex::Regex::new(r"\b(READ|WRITE) of size (\d+)").expect("access regex");
    let alloc_re = regex::Regex::new(r"(?:left|right|inside) of (\d+)-byte region")
        .expect("alloc regex");
    let access = access_re.captures(report).map(|c| AccessInfo {
        direction: if &c[1] == "READ" {
            AccessDirection::Read
        } else {
            AccessDirection::Write
        },
        size: c[2].parse().unwrap_or(0),
        allocation_size: alloc_re
            .captures(report)
            .and_then(|a| a[1].parse().ok()),
    });

    Some(SanitizerTrace {
        error_kind,
        frames: first_frame_block(report),
        access,
    })
}

/// Collect the first contiguous run of `#N 0x... ...` frame lines.
fn first_frame_block(report: &str) -> Vec<Frame> {
    let frame_re = regex::Regex::new(
        r"^\s*#(\d+)\s+0x[0-9a-fA-F]+\s+(?:in\s+)?(.*)$",
    )
    .expect("frame regex");
    let mut frames = Vec::new();
    let mut in_block = false;
    for line in report.lines() {
        match frame_re.captures(line) {
            Some(cap) => {
                in_block = true;
                frames.push(parse_frame_tail(&cap[2]));
            }
            None => {
                // Symbolizer warnings may interleave before the block starts.
                if in_block && !line.trim().is_empty() {
                    break;
                }
                if in_block && line.trim().is_empty() {
                    break;
                }
            }
        }
    }
    frames
}

/// Parse the `func file:line[:col]` or `(module+0x...)` tail of a frame.
fn parse_frame_tail(tail: &str) -> Frame {
    let tail = tail.trim();
    if tail.starts_with('(') {
        // Unsymbolized: `(/path/bin+0x1234) (BuildId: ...)`.
        return Frame {
            function: tail.to_string(),
            file: None,
            line: None,
        };
    }
    let mut parts = tail.splitn(2, char::is_whitespace);
    let function = parts.next().unwrap_or("").to_string();
    let rest = parts.next().unwrap_or("").trim();
    if rest.is_empty() || rest.starts_with('(') || rest == "??:?" || rest == "??:0" {
        return Frame {
            function,
            file: None,
            line: None,
        };
    }
    let loc_re = regex::Regex::new(r"^(.*?):(\d+)(?::\d+)?$").expect("loc regex");
    if let Some(cap) = loc_re.captures(rest) {
        let file = cap[1].to_string();
        if file.starts_with("??") {
            return Frame {
                function,
                file: None,
                line: None,
            };
        }
        return Frame {
            function,
            file: Some(file),
            line: cap[2].parse().ok(),
        };
    }
    Frame {
        function,
        file: None,
        line: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OVERFLOW_REPORT: &str = "\
=================================================================
==123==ERROR: AddressSanitizer: heap-buffer-overflow on address 0x602000000020 at pc 0x49e52a bp 0x7ffc sp 0x7ff8
WRITE of size 17 at 0x602000000020 thread T0
    #0 0x49e529 in __asan_memcpy ??:?
    #1 0x4d9fae in img_apply_frame /work/proj/lib/imgbuf.c:25
    #2 0x4da111 in main /tmp/replay/replay.c:40:3
    #3 0x7f90d8c29d8f in __libc_start_call_main csu/../sysdeps/nptl/libc_start_call_main.h:58

0x602000000020 is located 0 bytes to the right of 16-byte region [0x602000000010,0x602000000020)
allocated by thread T0 here:
    #0 0x49f14e in malloc ??:?
    #1 0x4da0aa in main /tmp/replay/replay.c:12

SUMMARY: AddressSanitizer: heap-buffer-overflow /work/proj/lib/imgbuf.c:25 in img_apply_frame
";

    #[test]
    fn parses_overflow_report() {
        let trace = parse_sanitizer_trace(OVERFLOW_REPORT).unwrap();
        assert_eq!(trace.error_kind, ErrorKind::HeapBufferOverflow);
        let access = trace.access.unwrap();
        assert_eq!(access.direction, AccessDirection::Write);
        assert_eq!(access.size, 17);
        assert_eq!(access.allocation_size, Some(16));
        assert_eq!(trace.frames.len(), 4);
        assert_eq!(trace.frames[1].function, "img_apply_frame");
        assert_eq!(trace.frames[1].file.as_deref(), Some("/work/proj/lib/imgbuf.c"));
        assert_eq!(trace.frames[1].line, Some(25));
        assert_eq!(trace.frames[2].line, Some(40));
        assert!(trace.frames[0].file.is_none());
    }

    #[test]
    fn first_block_only() {
        let trace = parse_sanitizer_trace(OVERFLOW_REPORT).unwrap();
        assert!(!trace.frames.iter().any(|f| f.function == "malloc"));
    }

    #[test]
    fn empty_stderr_is_none() {
        assert!(parse_sanitizer_trace("").is_none());
        assert!(parse_sanitizer_trace("program output\nno report\n").is_none());
    }

    #[test]
    fn segv_report() {
        let report = "\
==9==ERROR: AddressSanitizer: SEGV on unknown address 0x000000000000 (pc 0x401234 bp 0x0 sp 0x7ffd)
==9==The signal is caused by a READ memory access.
    #0 0x401233 in deref_null /p/null.c:4
    #1 0x401300 in main /p/main.c:9
";
        let trace = parse_sanitizer_trace(report).unwrap();
        assert_eq!(trace.error_kind, ErrorKind::Segv);
        assert_eq!(trace.frames[0].function, "deref_null");
        assert!(trace.access.is_none());
    }

    #[test]
    fn double_free_report() {
        let report = "\
==9==ERROR: AddressSanitizer: attempting double-free on 0x602000000010 in thread T0:
    #0 0x4a0001 in free ??:?
    #1 0x4a1000 in drop_twice /p/df.c:7
";
        let trace = parse_sanitizer_trace(report).unwrap();
        assert_eq!(trace.error_kind, ErrorKind::DoubleFree);
    }

    #[test]
    fn use_after_free_report() {
        let report = "\
==9==ERROR: AddressSanitizer: heap-use-after-free on address 0x602000000010 at pc 0x4a2 bp 0x1 sp 0x2
READ of size 4 at 0x602000000010 thread T0
    #0 0x4a1 in reuse /p/uaf.c:11
";
        let trace = parse_sanitizer_trace(report).unwrap();
        assert_eq!(trace.error_kind, ErrorKind::UseAfterFree);
        assert_eq!(trace.access.unwrap().direction, AccessDirection::Read);
    }

    #[test]
    fn leak_reports_ignored() {
        let report = "\
==9==ERROR: LeakSanitizer: detected memory leaks
Direct leak of 16 byte(s) in 1 object(s)
";
        assert!(parse_sanitizer_trace(report).is_none());
    }

    #[test]
    fn unsymbolized_frames_keep_module_text() {
        let report = "\
==9==ERROR: AddressSanitizer: heap-buffer-overflow on address 0x1 at pc 0x2 bp 0x3 sp 0x4
WRITE of size 1 at 0x1 thread T0
    #0 0x49e529  (/tmp/bin+0xa0529) (BuildId: abc)
    #1 0x4d9fae  (/tmp/bin+0xdbfae) (BuildId: abc)
";
        let trace = parse_sanitizer_trace(report).unwrap();
        assert_eq!(trace.frames.len(), 2);
        assert!(trace.frames[0].file.is_none());
        assert!(trace.frames[0].function.starts_with("(/tmp/bin"));
    }
}

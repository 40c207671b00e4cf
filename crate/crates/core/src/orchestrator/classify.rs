//! Feedback classification: compile diagnostics into fix categories, and
//! symbolic-execution output directories into the three run outcomes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::toolchain::probes::ProbeManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompileErrorClass {
    IncompleteType,
    ConflictingPrototype,
    Redefinition,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedDiagnostic {
    pub class: CompileErrorClass,
    pub suggested_fix: String,
}

const FIX_INCOMPLETE: &str = "Look up the missing struct definition in the project headers \
(source_extract the type name) and add a type-level stub containing the fields the slice \
accesses, in their original order.";
const FIX_CONFLICTING: &str = "Grep the project for the real prototype (source_search the \
function name) and make the stub or declaration match it exactly.";
const FIX_REDEFINITION: &str = "A stub duplicates an existing definition. Rename the stub or \
remove the duplicate definition from the slice.";
const FIX_OTHER: &str = "Read the first error line and fix the harness accordingly.";

/// First-match classification over ordered regex rules; `other` is the total
/// fallback, so every diagnostic classifies.
pub fn classify_compile_error(diagnostic: &str) -> ClassifiedDiagnostic {
    let rules: &[(CompileErrorClass, &str, &str)] = &[
        (
            CompileErrorClass::IncompleteType,
            r"(?i)incomplete (?:\w+ )?type|incomplete definition of|is incomplete",
            FIX_INCOMPLETE,
        ),
        (
            CompileErrorClass::ConflictingPrototype,
            r"(?i)conflicting types for|conflicting declaration",
            FIX_CONFLICTING,
        ),
        (
            CompileErrorClass::Redefinition,
            r"(?i)redefinition of|redefinition with different",
            FIX_REDEFINITION,
        ),
    ];
    for (class, pattern, fix) in rules {
        if regex::Regex::new(pattern).expect("rule regex").is_match(diagnostic) {
            return ClassifiedDiagnostic {
                class: *class,
                suggested_fix: fix.to_string(),
            };
        }
    }
    ClassifiedDiagnostic {
        class: CompileErrorClass::Other,
        suggested_fix: FIX_OTHER.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryErrorKind {
    Ptr,
    Free,
}

/// Classification of one SE run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum SeOutcome {
    /// A memory-error file exists; witness files accompany it.
    BugTriggered {
        kind: MemoryErrorKind,
        error_files: Vec<String>,
        witness_files: Vec<String>,
    },
    /// The injected reachability assertion fired without a memory error.
    SiteReached { error_files: Vec<String> },
    /// Neither fired; coverage probes show how far execution got.
    NotReached {
        entered: Vec<String>,
        missing: Vec<String>,
    },
}

/// Classify an SE output directory. Memory errors dominate, then the
/// reachability assertion, else not-reached with the probe coverage report.
pub fn classify_se_outcome(
    dir: &Path,
    manifest: &ProbeManifest,
) -> std::io::Result<SeOutcome> {
    let mut ptr_errs = Vec::new();
    let mut free_errs = Vec::new();
    let mut assert_errs = Vec::new();
    let mut ktests = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".ptr.err") {
            ptr_errs.push(name);
        } else if name.ends_with(".free.err") {
            free_errs.push(name);
        } else if name.ends_with(".assert.err") {
            let content = std::fs::read_to_string(entry.path()).unwrap_or_default();
            if content.contains("ASSERTION FAIL") {
                assert_errs.push(name);
            }
        } else if name.ends_with(".ktest") {
            ktests.push(name);
        }
    }
    ptr_errs.sort();
    free_errs.sort();
    assert_errs.sort();
    ktests.sort();

    if !ptr_errs.is_empty() || !free_errs.is_empty() {
        let kind = if ptr_errs.is_empty() {
            MemoryErrorKind::Free
        } else {
            MemoryErrorKind::Ptr
        };
        let mut error_files = ptr_errs;
        error_files.extend(free_errs);
        // Prefer the ktests paired with error files; fall back to all.
        let paired: Vec<String> = error_files
            .iter()
            .filter_map(|e| {
                let stem = e.split('.').next()?;
                let kt = format!("{stem}.ktest");
                ktests.contains(&kt).then_some(kt)
            })
            .collect();
        let witness_files = if paired.is_empty() { ktests } else { paired };
        return Ok(SeOutcome::BugTriggered {
            kind,
            error_files,
            witness_files,
        });
    }

    if !assert_errs.is_empty() {
        return Ok(SeOutcome::SiteReached {
            error_files: assert_errs,
        });
    }

    let log = std::fs::read_to_string(dir.join("messages.txt")).unwrap_or_default();
    let mut entered = Vec::new();
    let mut missing = Vec::new();
    for probe in manifest.expected() {
        if log.contains(probe) {
            entered.push(probe.to_string());
        } else {
            missing.push(probe.to_string());
        }
    }
    Ok(SeOutcome::NotReached { entered, missing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn dir_with(files: &[(&str, &str)]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (name, content) in files {
            std::fs::write(dir.path().join(name), content).unwrap();
        }
        dir
    }

    fn manifest(probes: &[(&str, &str)]) -> ProbeManifest {
        ProbeManifest {
            probes: probes
                .iter()
                .map(|(p, f)| (p.to_string(), f.to_string()))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn ptr_err_is_bug() {
        let dir = dir_with(&[
            ("test000002.ptr.err", "Error: memory error: out of bound pointer\n"),
            ("test000002.ktest", "KTEST"),
            ("messages.txt", ""),
        ]);
        match classify_se_outcome(dir.path(), &manifest(&[])).unwrap() {
            SeOutcome::BugTriggered {
                kind,
                witness_files,
                error_files,
            } => {
                assert_eq!(kind, MemoryErrorKind::Ptr);
                assert_eq!(error_files, vec!["test000002.ptr.err"]);
                assert_eq!(witness_files, vec!["test000002.ktest"]);
            }
            other => panic!("expected bug, got {other:?}"),
        }
    }

    #[test]
    fn free_err_is_bug() {
        let dir = dir_with(&[
            ("test000001.free.err", "Error: memory error: invalid pointer: free\n"),
            ("test000001.ktest", "KTEST"),
        ]);
        assert!(matches!(
            classify_se_outcome(dir.path(), &manifest(&[])).unwrap(),
            SeOutcome::BugTriggered {
                kind: MemoryErrorKind::Free,
                ..
            }
        ));
    }

    #[test]
    fn assert_only_is_site_reached() {
        let dir = dir_with(&[
            ("test000001.assert.err", "Error: ASSERTION FAIL: 0\n"),
            ("test000001.ktest", "KTEST"),
        ]);
        assert!(matches!(
            classify_se_outcome(dir.path(), &manifest(&[])).unwrap(),
            SeOutcome::SiteReached { .. }
        ));
    }

    #[test]
    fn bug_beats_assert() {
        let dir = dir_with(&[
            ("test000001.assert.err", "Error: ASSERTION FAIL: 0\n"),
            ("test000002.ptr.err", "Error: memory error\n"),
            ("test000002.ktest", ""),
        ]);
        assert!(matches!(
            classify_se_outcome(dir.path(), &manifest(&[])).unwrap(),
            SeOutcome::BugTriggered { .. }
        ));
    }

    #[test]
    fn probe_coverage_reported() {
        let dir = dir_with(&[(
            "messages.txt",
            "KLEE: WARNING ONCE: probe_a\nKLEE: WARNING ONCE: probe_b\n",
        )]);
        let m = manifest(&[
            ("probe_a", "a"),
            ("probe_b", "b"),
            ("probe_c", "c"),
            ("probe_d", "d"),
        ]);
        match classify_se_outcome(dir.path(), &m).unwrap() {
            SeOutcome::NotReached { entered, missing } => {
                assert_eq!(entered, vec!["probe_a", "probe_b"]);
                assert_eq!(missing, vec!["probe_c", "probe_d"]);
            }
            other => panic!("expected not reached, got {other:?}"),
        }
    }

    #[test]
    fn unreadable_dir_is_io_error() {
        assert!(classify_se_outcome(Path::new("/nonexistent/xyz"), &manifest(&[])).is_err());
    }

    #[test]
    fn compile_classes() {
        assert_eq!(
            classify_compile_error("x.c:1:9: error: variable has incomplete type 'struct bfd'").class,
            CompileErrorClass::IncompleteType
        );
        assert_eq!(
            classify_compile_error("x.c:2:5: error: conflicting types for 'bfd_get_32'").class,
            CompileErrorClass::ConflictingPrototype
        );
        assert_eq!(
            classify_compile_error("x.c:3:5: error: redefinition of 'frame'").class,
            CompileErrorClass::Redefinition
        );
        assert_eq!(
            classify_compile_error("x.c:4:1: warning: unused variable 'v'").class,
            CompileErrorClass::Other
        );
    }
}

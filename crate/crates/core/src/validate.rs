//! Concrete validation: build the unmodified project with a memory
//! sanitizer, replay witness inputs through a concrete driver, and classify
//! the verdict from the sanitizer trace alone.
//!
//! This path is deliberately independent of the LLM and the code slice: only
//! the replay driver, the witness bytes, and the instrumented archive
//! participate, so a confirmed verdict cannot be an artifact of harness
//! modeling.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ktest::WitnessFile;
use crate::replay::ReplayDriver;
use crate::sanitizer::{parse_sanitizer_trace, AccessDirection, ErrorKind, Frame, SanitizerTrace};
use crate::toolchain::find_in_path;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("build script {script:?} failed (exit {code:?}); log:\n{log}")]
    BuildFailed {
        script: PathBuf,
        code: Option<i32>,
        log: String,
    },
    #[error("build script produced no static archive under {dir:?}")]
    NoArchive { dir: PathBuf },
    #[error("toolchain binary {tool:?} not found")]
    Environment { tool: String },
    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("verdict is not confirmed; refusing to emit a verified bug report")]
    NotConfirmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    /// Sanitizer reported a memory-safety violation inside project source.
    Confirmed,
    /// Clean exit, non-project crash, or replay failure.
    Unconfirmed,
    /// Crash frames lie only in the replay driver, not the project.
    StubCrash,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub spec_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<SanitizerTrace>,
    /// Top-most frame attributed to project source, project-relative.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crash_frame: Option<CrashFrame>,
    /// Witness file the replay consumed.
    pub witness: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashFrame {
    pub function: String,
    pub file: String,
    pub line: u32,
}

/// Options for the replay step.
pub struct ReplayConfig {
    pub cc: PathBuf,
    /// Extra include directories for compiling the replay driver.
    pub include_paths: Vec<PathBuf>,
    /// Names defined by the project, used to attribute unsymbolized frames.
    pub project_symbols: BTreeSet<String>,
    /// Explicit sanitizer symbolizer binary, when the default is unusable.
    pub symbolizer: Option<PathBuf>,
}

impl ReplayConfig {
    pub fn discover() -> Result<Self, ValidateError> {
        let cc = find_in_path("clang")
            .or_else(|| find_in_path("cc"))
            .ok_or_else(|| ValidateError::Environment {
                tool: "clang".into(),
            })?;
        Ok(Self {
            cc,
            include_paths: Vec::new(),
            project_symbols: BTreeSet::new(),
            symbolizer: default_symbolizer(),
        })
    }
}

/// An external symbolizer for the sanitizer runtime: llvm-symbolizer when
/// installed, else addr2line.
pub fn default_symbolizer() -> Option<PathBuf> {
    find_in_path("llvm-symbolizer").or_else(|| find_in_path("addr2line"))
}

/// Run the project's build script with sanitizer flags injected through the
/// environment, then verify it produced a static archive.
///
/// Contract with the script: it runs with CWD at the project root and must
/// place its archive(s) under `$OUT_DIR`. `CC`, `CFLAGS`, and `LDFLAGS`
/// carry the sanitizer configuration.
pub fn build_sanitized_library(
    project_root: &Path,
    build_script: &Path,
    out_dir: &Path,
) -> Result<PathBuf, ValidateError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ValidateError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    // The script runs with CWD at the project root; resolve every path first
    // so relative inputs from the config still work.
    let out_dir = out_dir.canonicalize().map_err(|e| ValidateError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let build_script = build_script
        .canonicalize()
        .map_err(|e| ValidateError::Io {
            path: build_script.to_path_buf(),
            source: e,
        })?;
    let cc = find_in_path("clang").ok_or_else(|| ValidateError::Environment {
        tool: "clang".into(),
    })?;
    let sanitizer_flags = "-fsanitize=address -fno-omit-frame-pointer -gdwarf-4 -O0";
    let output = std::process::Command::new(&build_script)
        .current_dir(project_root)
        .env("OUT_DIR", &out_dir)
        .env("CC", &cc)
        .env("CFLAGS", sanitizer_flags)
        .env("LDFLAGS", "-fsanitize=address")
        .output()
        .map_err(|e| ValidateError::Io {
            path: build_script.to_path_buf(),
            source: e,
        })?;
    if !output.status.success() {
        return Err(ValidateError::BuildFailed {
            script: build_script.to_path_buf(),
            code: output.status.code(),
            log: format!(
                "{}{}",
                String::from_utf8_lossy(&output.stdout),
                String::from_utf8_lossy(&output.stderr)
            ),
        });
    }
    let mut archives: Vec<PathBuf> = std::fs::read_dir(&out_dir)
        .map_err(|e| ValidateError::Io {
            path: out_dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().and_then(|x| x.to_str()) == Some("a"))
        .collect();
    archives.sort();
    archives
        .into_iter()
        .next()
        .ok_or_else(|| ValidateError::NoArchive {
            dir: out_dir.to_path_buf(),
        })
}

/// Compile the replay driver, link the instrumented archive, execute, and
/// classify. Every replay yields exactly one of confirmed / unconfirmed /
/// stub_crash.
pub fn replay_and_classify(
    replay: &ReplayDriver,
    archive: &Path,
    project_root: &Path,
    spec_id: &str,
    witness_name: &str,
    config: &ReplayConfig,
) -> Result<Verdict, ValidateError> {
    let dir = tempfile::tempdir().map_err(|e| ValidateError::Io {
        path: PathBuf::from("tempdir"),
        source: e,
    })?;
    let replay_c = dir.path().join("replay.c");
    std::fs::write(&replay_c, &replay.source).map_err(|e| ValidateError::Io {
        path: replay_c.clone(),
        source: e,
    })?;
    let replay_bin = dir.path().join("replay_bin");

    let mut cmd = std::process::Command::new(&config.cc);
    cmd.arg("-fsanitize=address")
        .arg("-gdwarf-4")
        .arg("-O0")
        .arg("-fno-omit-frame-pointer");
    for inc in &config.include_paths {
        cmd.arg("-I").arg(inc);
    }
    cmd.arg(&replay_c).arg(archive).arg("-o").arg(&replay_bin);
    let compile = cmd.output().map_err(|e| ValidateError::Io {
        path: config.cc.clone(),
        source: e,
    })?;
    if !compile.status.success() {
        return Ok(Verdict {
            status: VerdictStatus::Unconfirmed,
            spec_id: spec_id.to_string(),
            trace: None,
            crash_frame: None,
            witness: witness_name.to_string(),
            reason: Some(format!(
                "replay driver failed to compile:\n{}",
                String::from_utf8_lossy(&compile.stderr)
            )),
        });
    }

    let mut asan_options = "abort_on_error=1:detect_leaks=0".to_string();
    let mut run = std::process::Command::new(&replay_bin);
    if let Some(symbolizer) = &config.symbolizer {
        asan_options.push_str(":symbolize=1");
        run.env("ASAN_SYMBOLIZER_PATH", symbolizer);
    }
    run.env("ASAN_OPTIONS", asan_options);
    let output = run.output().map_err(|e| ValidateError::Io {
        path: replay_bin.clone(),
        source: e,
    })?;
    let stderr = String::from_utf8_lossy(&output.stderr).into_owned();

    Ok(classify_replay_output(
        &stderr,
        output.status.success(),
        project_root,
        spec_id,
        witness_name,
        &config.project_symbols,
    ))
}

/// Pure classification of one replay execution, factored out for testing.
pub fn classify_replay_output(
    stderr: &str,
    clean_exit: bool,
    project_root: &Path,
    spec_id: &str,
    witness_name: &str,
    project_symbols: &BTreeSet<String>,
) -> Verdict {
    let trace = parse_sanitizer_trace(stderr);
    let Some(trace) = trace else {
        return Verdict {
            status: VerdictStatus::Unconfirmed,
            spec_id: spec_id.to_string(),
            trace: None,
            crash_frame: None,
            witness: witness_name.to_string(),
            reason: Some(if clean_exit {
                "clean exit".to_string()
            } else {
                "crashed without a sanitizer report".to_string()
            }),
        };
    };

    let canon_root = project_root
        .canonicalize()
        .unwrap_or_else(|_| project_root.to_path_buf());
    let project_frame = trace
        .frames
        .iter()
        .find(|f| frame_in_project(f, &canon_root, project_symbols));
    match project_frame {
        Some(frame) => {
            let file = frame
                .file
                .as_deref()
                .map(|f| relativize(f, &canon_root))
                .unwrap_or_default();
            Verdict {
                status: VerdictStatus::Confirmed,
                spec_id: spec_id.to_string(),
                crash_frame: Some(CrashFrame {
                    function: frame.function.clone(),
                    file,
                    line: frame.line.unwrap_or(0),
                }),
                trace: Some(trace),
                witness: witness_name.to_string(),
                reason: None,
            }
        }
        None => {
            // A crash whose symbolized frames never enter the project is a
            // harness artifact when any frame is attributable to the replay
            // driver; otherwise it stays unconfirmed.
            let in_driver = trace.frames.iter().any(|f| {
                f.file
                    .as_deref()
                    .map(|file| file.ends_with("replay.c"))
                    .unwrap_or(false)
                    || f.function == "main"
            });
            Verdict {
                status: if in_driver {
                    VerdictStatus::StubCrash
                } else {
                    VerdictStatus::Unconfirmed
                },
                spec_id: spec_id.to_string(),
                trace: Some(trace),
                crash_frame: None,
                witness: witness_name.to_string(),
                reason: Some(if in_driver {
                    "crash frames lie only in the replay driver".to_string()
                } else {
                    "sanitizer crash outside project source".to_string()
                }),
            }
        }
    }
}

fn frame_in_project(frame: &Frame, canon_root: &Path, symbols: &BTreeSet<String>) -> bool {
    if let Some(file) = &frame.file {
        let p = Path::new(file);
        let canon = p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
        return canon.starts_with(canon_root);
    }
    // No debug location: fall back to the project symbol list.
    symbols.contains(&frame.function)
}

fn relativize(file: &str, canon_root: &Path) -> String {
    let p = Path::new(file);
    let canon = p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
    canon
        .strip_prefix(canon_root)
        .map(|r| r.to_string_lossy().into_owned())
        .unwrap_or_else(|_| file.to_string())
}

/// Render the final pipeline output for one confirmed crash: the sanitizer
/// verdict assembled with the symbolic witness inputs and the spec identity.
/// Stable key order; byte-identical across emissions.
pub fn emit_verified_bug(
    verdict: &Verdict,
    wf: &WitnessFile,
    spec: &crate::specgen::VulnSpec,
) -> Result<String, ValidateError> {
    if verdict.status != VerdictStatus::Confirmed {
        return Err(ValidateError::NotConfirmed);
    }
    let trace = verdict.trace.as_ref().expect("confirmed verdict has trace");
    let access = trace.access.as_ref().map(|a| {
        json!({
            "direction": match a.direction {
                AccessDirection::Read => "read",
                AccessDirection::Write => "write",
            },
            "size": a.size,
            "allocation_size": a.allocation_size,
        })
    });
    let description = trace.access.as_ref().map(|a| {
        let verb = match a.direction {
            AccessDirection::Read => "reading",
            AccessDirection::Write => "writing",
        };
        match a.allocation_size {
            Some(alloc) => format!("{verb} {} bytes past a {alloc}-byte allocation", a.size),
            None => format!("{verb} {} bytes out of bounds", a.size),
        }
    });

    let mut doc = serde_json::Map::new();
    doc.insert("error_kind".into(), json!(error_kind_str(&trace.error_kind)));
    if let Some(d) = description {
        doc.insert("description".into(), json!(d));
    }
    if let Some(a) = access {
        doc.insert("access".into(), a);
    }
    doc.insert(
        "crash_frame".into(),
        json!(verdict.crash_frame.as_ref().expect("confirmed has frame")),
    );
    doc.insert(
        "witnesses".into(),
        json!(wf
            .objects
            .iter()
            .map(|o| json!({"name": o.name, "size": o.bytes.len()}))
            .collect::<Vec<_>>()),
    );
    doc.insert(
        "spec".into(),
        json!({
            "spec_id": spec.spec_id,
            "rule_id": spec.rule_id,
            "file": spec.file,
            "line": spec.line,
        }),
    );
    doc.insert("witness_file".into(), json!(verdict.witness));
    Ok(serde_json::to_string_pretty(&serde_json::Value::Object(doc))
        .expect("verified bug serializes"))
}

fn error_kind_str(kind: &ErrorKind) -> &str {
    kind.as_str()
}

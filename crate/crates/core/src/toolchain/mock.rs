//! Deterministic mock compiler and symbolic-execution backends.
//!
//! Mocks are scripted by harness content hash, not turn index: a refinement
//! loop sees its feedback change exactly when the harness changes. Plans can
//! be built programmatically or loaded from JSON for CLI runs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    harness_hash_of_dir, next_output_dir, CompileOutcome, CompileRequest, Compiler, SeConfig,
    SeRunResult, SymbolicExecutor, ToolchainError,
};
use crate::ktest::{serialize_ktest, WitnessFile, WitnessObject};

/// Scripted compile behavior for one harness hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CompileScript {
    Success,
    Diagnostic { text: String },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CompilerPlan {
    #[serde(default)]
    pub by_hash: HashMap<String, CompileScript>,
    /// Behavior when no hash matches; successful compilation by default.
    #[serde(default)]
    pub default: Option<CompileScript>,
}

/// Mock compiler: emits a placeholder bitcode file whose content records the
/// harness hash, or a scripted diagnostic.
pub struct MockCompiler {
    plan: CompilerPlan,
}

impl MockCompiler {
    pub fn new(plan: CompilerPlan) -> Self {
        Self { plan }
    }

    pub fn always_success() -> Self {
        Self::new(CompilerPlan::default())
    }

    pub fn from_json(text: &str) -> Result<Self, ToolchainError> {
        serde_json::from_str(text)
            .map(Self::new)
            .map_err(|e| ToolchainError::Plan(e.to_string()))
    }
}

/// The harness directory keying the mocks: `<workdir>/harness`.
pub fn harness_dir(workdir: &Path) -> PathBuf {
    workdir.join("harness")
}

impl Compiler for MockCompiler {
    fn compile_and_link(
        &self,
        req: &CompileRequest,
        workdir: &Path,
    ) -> Result<CompileOutcome, ToolchainError> {
        if req.sources.is_empty() {
            return Err(ToolchainError::NoSources);
        }
        let hash = harness_hash_of_dir(&harness_dir(workdir))?;
        let script = self
            .plan
            .by_hash
            .get(&hash)
            .or(self.plan.default.as_ref())
            .cloned()
            .unwrap_or(CompileScript::Success);
        match script {
            CompileScript::Diagnostic { text } => Ok(CompileOutcome::Diagnostic(text)),
            CompileScript::Success => {
                let build_dir = workdir.join("build");
                std::fs::create_dir_all(&build_dir).map_err(|e| ToolchainError::Io {
                    path: build_dir.clone(),
                    source: e,
                })?;
                let final_bc = build_dir.join("final.bc");
                std::fs::write(&final_bc, format!("mock-bitcode {hash}\n")).map_err(|e| {
                    ToolchainError::Io {
                        path: final_bc.clone(),
                        source: e,
                    }
                })?;
                Ok(CompileOutcome::Bitcode(final_bc))
            }
        }
    }
}

/// Specification of a witness object materialized by the mock engine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub len: usize,
    #[serde(default)]
    pub fill: u8,
    /// Explicit bytes, overriding `len`/`fill`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hex: Option<String>,
}

impl ObjectSpec {
    fn to_object(&self) -> Result<WitnessObject, ToolchainError> {
        let bytes = match &self.hex {
            Some(h) => hex::decode(h).map_err(|e| ToolchainError::Plan(e.to_string()))?,
            None => vec![self.fill; self.len],
        };
        Ok(WitnessObject {
            name: self.name.clone(),
            bytes,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryErrKind {
    Ptr,
    Free,
}

/// Scripted SE behavior for one harness hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SeScript {
    /// Memory error detected: an error file plus a witness ktest.
    Bug {
        err: MemoryErrKind,
        objects: Vec<ObjectSpec>,
        #[serde(default)]
        entered: Vec<String>,
    },
    /// The reachability assertion fired.
    SiteReached {
        #[serde(default)]
        entered: Vec<String>,
    },
    /// Nothing fired; only some probes were entered.
    NotReached {
        #[serde(default)]
        entered: Vec<String>,
    },
    /// Run hit the timeout with an empty error set.
    Timeout,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SePlan {
    #[serde(default)]
    pub by_hash: HashMap<String, SeScript>,
    #[serde(default)]
    pub default: Option<SeScript>,
}

impl Default for SePlan {
    fn default() -> Self {
        Self {
            by_hash: HashMap::new(),
            default: Some(SeScript::NotReached {
                entered: Vec::new(),
            }),
        }
    }
}

/// Mock symbolic executor: materializes a scripted output directory.
pub struct MockSymbolicExecutor {
    plan: SePlan,
}

impl MockSymbolicExecutor {
    pub fn new(plan: SePlan) -> Self {
        Self { plan }
    }

    pub fn from_json(text: &str) -> Result<Self, ToolchainError> {
        serde_json::from_str(text)
            .map(Self::new)
            .map_err(|e| ToolchainError::Plan(e.to_string()))
    }
}

fn write_file(dir: &Path, name: &str, content: &[u8]) -> Result<(), ToolchainError> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| ToolchainError::Io { path, source: e })
}

fn messages_for(entered: &[String]) -> String {
    let mut out = String::new();
    for probe in entered {
        out.push_str(&format!("KLEE: WARNING ONCE: {probe}\n"));
    }
    out
}

impl SymbolicExecutor for MockSymbolicExecutor {
    fn run(
        &self,
        bitcode: &Path,
        _config: &SeConfig,
        workdir: &Path,
    ) -> Result<SeRunResult, ToolchainError> {
        if !bitcode.exists() {
            return Err(ToolchainError::MissingBitcode(bitcode.to_path_buf()));
        }
        let hash = harness_hash_of_dir(&harness_dir(workdir))?;
        let script = self
            .plan
            .by_hash
            .get(&hash)
            .or(self.plan.default.as_ref())
            .cloned()
            .unwrap_or(SeScript::NotReached {
                entered: Vec::new(),
            });

        let out_dir = next_output_dir(workdir);
        std::fs::create_dir_all(&out_dir).map_err(|e| ToolchainError::Io {
            path: out_dir.clone(),
            source: e,
        })?;
        write_file(&out_dir, "info", b"mock symbolic execution run\n")?;

        let mut timed_out = false;
        match &script {
            SeScript::Bug {
                err,
                objects,
                entered,
            } => {
                let objects = objects
                    .iter()
                    .map(ObjectSpec::to_object)
                    .collect::<Result<Vec<_>, _>>()?;
                let wf = WitnessFile {
                    objects,
                    ..WitnessFile::default()
                };
                write_file(&out_dir, "test000001.ktest", &serialize_ktest(&wf))?;
                let (err_name, err_text) = match err {
                    MemoryErrKind::Ptr => (
                        "test000001.ptr.err",
                        "Error: memory error: out of bound pointer\n",
                    ),
                    MemoryErrKind::Free => (
                        "test000001.free.err",
                        "Error: memory error: invalid pointer: free\n",
                    ),
                };
                write_file(&out_dir, err_name, err_text.as_bytes())?;
                write_file(&out_dir, "messages.txt", messages_for(entered).as_bytes())?;
            }
            SeScript::SiteReached { entered } => {
                let wf = WitnessFile::default();
                write_file(&out_dir, "test000001.ktest", &serialize_ktest(&wf))?;
                write_file(
                    &out_dir,
                    "test000001.assert.err",
                    b"Error: ASSERTION FAIL: 0\n",
                )?;
                write_file(&out_dir, "messages.txt", messages_for(entered).as_bytes())?;
            }
            SeScript::NotReached { entered } => {
                write_file(&out_dir, "messages.txt", messages_for(entered).as_bytes())?;
            }
            SeScript::Timeout => {
                write_file(&out_dir, "messages.txt", b"")?;
                timed_out = true;
            }
        }

        Ok(SeRunResult {
            output_dir: out_dir,
            exit_status: Some(0),
            wall_time: Duration::from_millis(1),
            raw_log: if timed_out {
                "KLEE: HALT: max-time reached\n".into()
            } else {
                "KLEE: done\n".into()
            },
            timed_out,
        })
    }
}

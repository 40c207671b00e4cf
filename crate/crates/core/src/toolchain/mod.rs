//! Backend drivers for compilation, bitcode linking, and symbolic execution.
//!
//! Each backend exists twice: a real driver that shells out to the toolchain
//! binaries, and a deterministic mock twin ([`mock`]) scripted by harness
//! content hash so the whole pipeline is testable without clang or an SE
//! engine installed. Missing binaries surface as [`ToolchainError::Environment`],
//! distinct from compile failures, so callers can skip rather than fail.

pub mod mock;
pub mod probes;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolchainError {
    #[error("toolchain binary {tool:?} not found (set an explicit path in the config)")]
    Environment { tool: String },
    #[error("compile request has no sources")]
    NoSources,
    #[error("bitcode {0:?} does not exist")]
    MissingBitcode(PathBuf),
    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("mock plan error: {0}")]
    Plan(String),
}

/// One harness compilation: sources to bitcode, linked into a single module.
/// Optimization is fixed at none and debug info on; those are compiled into
/// the real backend's flags rather than configurable.
#[derive(Debug, Clone, Default)]
pub struct CompileRequest {
    pub sources: Vec<PathBuf>,
    pub include_paths: Vec<PathBuf>,
    pub defs: Vec<String>,
}

#[derive(Debug, Clone)]
pub enum CompileOutcome {
    Bitcode(PathBuf),
    /// Full compiler/linker stderr, for classification and LLM feedback.
    Diagnostic(String),
}

pub trait Compiler: Send + Sync {
    fn compile_and_link(
        &self,
        req: &CompileRequest,
        workdir: &Path,
    ) -> Result<CompileOutcome, ToolchainError>;
}

/// Symbolic-execution run parameters. Strategy names and extra flags are
/// backend-specific strings, not hardcoded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeConfig {
    pub search_strategies: Vec<String>,
    pub per_run_timeout_secs: u64,
    pub max_depth: u32,
    #[serde(default)]
    pub extra_flags: Vec<String>,
}

impl Default for SeConfig {
    fn default() -> Self {
        Self {
            search_strategies: vec!["random-path".into(), "dfs".into()],
            per_run_timeout_secs: 300,
            max_depth: 1000,
            extra_flags: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeRunResult {
    pub output_dir: PathBuf,
    pub exit_status: Option<i32>,
    pub wall_time: Duration,
    pub raw_log: String,
    pub timed_out: bool,
}

pub trait SymbolicExecutor: Send + Sync {
    fn run(
        &self,
        bitcode: &Path,
        config: &SeConfig,
        workdir: &Path,
    ) -> Result<SeRunResult, ToolchainError>;
}

/// Stable hash over harness file (name, content) pairs; the key mock
/// backends are scripted by. Files are sorted by name so write order does
/// not matter.
pub fn harness_hash(files: &[(String, String)]) -> String {
    let mut sorted: Vec<_> = files.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut hasher = Sha256::new();
    for (name, content) in sorted {
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update(content.as_bytes());
        hasher.update([0]);
    }
    hex::encode(&hasher.finalize()[..16])
}

/// Harness hash over every regular file directly inside `dir`.
pub fn harness_hash_of_dir(dir: &Path) -> Result<String, ToolchainError> {
    let mut files = Vec::new();
    if dir.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| ToolchainError::Io {
                path: dir.to_path_buf(),
                source: e,
            })?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for path in entries {
            let content = std::fs::read_to_string(&path).map_err(|e| ToolchainError::Io {
                path: path.clone(),
                source: e,
            })?;
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("")
                .to_string();
            files.push((name, content));
        }
    }
    Ok(harness_hash(&files))
}

/// Search the PATH for a binary.
pub fn find_in_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    for dir in std::env::split_paths(&path) {
        let candidate = dir.join(name);
        if candidate.is_file() {
            return Some(candidate);
        }
    }
    None
}

/// How linked bitcode is produced.
#[derive(Debug, Clone)]
enum LinkBackend {
    /// `llvm-link a.bc b.bc -o final.bc`
    LlvmLink(PathBuf),
    /// `clang -flto -fuse-ld=lld -Wl,--plugin-opt=emit-llvm`: merges modules
    /// through the LTO pipeline when llvm-link is not installed.
    ClangLtoLld(PathBuf),
}

/// Real clang-based compiler backend.
pub struct RealCompiler {
    clang: PathBuf,
    linker: LinkBackend,
}

impl RealCompiler {
    /// Use explicit binary paths. `llvm_link` may be absent, in which case
    /// linking goes through clang's LTO path.
    pub fn new(clang: PathBuf, llvm_link: Option<PathBuf>) -> Self {
        let linker = match llvm_link {
            Some(p) => LinkBackend::LlvmLink(p),
            None => LinkBackend::ClangLtoLld(clang.clone()),
        };
        Self { clang, linker }
    }

    /// Find clang (and llvm-link when present) on the PATH.
    pub fn discover() -> Result<Self, ToolchainError> {
        let clang = find_in_path("clang").ok_or_else(|| ToolchainError::Environment {
            tool: "clang".into(),
        })?;
        let llvm_link = find_in_path("llvm-link");
        Ok(Self::new(clang, llvm_link))
    }
}

fn run_command(
    mut cmd: std::process::Command,
) -> Result<(Option<i32>, String, String), ToolchainError> {
    let program = cmd.get_program().to_os_string();
    let output = cmd.output().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ToolchainError::Environment {
                tool: program.to_string_lossy().into_owned(),
            }
        } else {
            ToolchainError::Io {
                path: PathBuf::from(program.clone()),
                source: e,
            }
        }
    })?;
    Ok((
        output.status.code(),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    ))
}

impl Compiler for RealCompiler {
    fn compile_and_link(
        &self,
        req: &CompileRequest,
        workdir: &Path,
    ) -> Result<CompileOutcome, ToolchainError> {
        if req.sources.is_empty() {
            return Err(ToolchainError::NoSources);
        }
        let build_dir = workdir.join("build");
        std::fs::create_dir_all(&build_dir).map_err(|e| ToolchainError::Io {
            path: build_dir.clone(),
            source: e,
        })?;
        // Absolute paths: link/compile subprocesses must not depend on the
        // caller's working directory.
        let build_dir = build_dir.canonicalize().map_err(|e| ToolchainError::Io {
            path: build_dir.clone(),
            source: e,
        })?;
        let mut objects = Vec::new();
        for (i, source) in req.sources.iter().enumerate() {
            let stem = source
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("src");
            let object = build_dir.join(format!("{i:02}_{stem}.bc"));
            let mut cmd = std::process::Command::new(&self.clang);
            cmd.arg("-O0").arg("-g").arg("-emit-llvm").arg("-c");
            for inc in &req.include_paths {
                cmd.arg("-I").arg(inc);
            }
            for def in &req.defs {
                cmd.arg(format!("-D{def}"));
            }
            cmd.arg(source).arg("-o").arg(&object);
            let (code, _out, err) = run_command(cmd)?;
            if code != Some(0) {
                return Ok(CompileOutcome::Diagnostic(err));
            }
            objects.push(object);
        }
        let final_bc = build_dir.join("final.bc");
        let cmd = match &self.linker {
            LinkBackend::LlvmLink(link) => {
                let mut cmd = std::process::Command::new(link);
                cmd.args(&objects).arg("-o").arg(&final_bc);
                cmd
            }
            LinkBackend::ClangLtoLld(clang) => {
                let mut cmd = std::process::Command::new(clang);
                cmd.arg("-flto")
                    .arg("-fuse-ld=lld")
                    .arg("-Wl,--plugin-opt=emit-llvm")
                    .arg("-nostdlib")
                    .arg("-Wl,--unresolved-symbols=ignore-all")
                    .arg("-Wl,-e,main")
                    .args(&objects)
                    .arg("-o")
                    .arg(&final_bc);
                cmd
            }
        };
        let (code, _out, err) = run_command(cmd)?;
        if code != Some(0) {
            return Ok(CompileOutcome::Diagnostic(err));
        }
        Ok(CompileOutcome::Bitcode(final_bc))
    }
}

/// Real KLEE-style executor driven entirely by configured flag strings.
pub struct RealSymbolicExecutor {
    engine: PathBuf,
}

impl RealSymbolicExecutor {
    pub fn new(engine: PathBuf) -> Self {
        Self { engine }
    }

    pub fn discover() -> Result<Self, ToolchainError> {
        find_in_path("klee")
            .map(Self::new)
            .ok_or_else(|| ToolchainError::Environment {
                tool: "klee".into(),
            })
    }
}

/// Next unused `klee-out-NNN` directory index under `workdir`.
pub fn next_output_dir(workdir: &Path) -> PathBuf {
    for n in 0.. {
        let candidate = workdir.join(format!("klee-out-{n:03}"));
        if !candidate.exists() {
            return candidate;
        }
    }
    unreachable!()
}

impl SymbolicExecutor for RealSymbolicExecutor {
    fn run(
        &self,
        bitcode: &Path,
        config: &SeConfig,
        workdir: &Path,
    ) -> Result<SeRunResult, ToolchainError> {
        if !bitcode.exists() {
            return Err(ToolchainError::MissingBitcode(bitcode.to_path_buf()));
        }
        let out_dir = next_output_dir(workdir);
        let mut cmd = std::process::Command::new(&self.engine);
        cmd.arg(format!("--output-dir={}", out_dir.display()));
        for strategy in &config.search_strategies {
            cmd.arg(format!("--search={strategy}"));
        }
        cmd.arg(format!("-max-time={}", config.per_run_timeout_secs));
        cmd.arg(format!("-max-depth={}", config.max_depth));
        for flag in &config.extra_flags {
            cmd.arg(flag);
        }
        cmd.arg(bitcode);
        let start = Instant::now();
        let (code, out, err) = run_command(cmd)?;
        let wall_time = start.elapsed();
        let raw_log = format!("{out}{err}");
        let timed_out = raw_log.contains("HaltTimer invoked") || raw_log.contains("max-time");
        Ok(SeRunResult {
            output_dir: out_dir,
            exit_status: code,
            wall_time,
            raw_log,
            timed_out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_order_independent_and_content_sensitive() {
        let a = harness_hash(&[
            ("driver.c".into(), "int main(){}".into()),
            ("slice.c".into(), "void f(){}".into()),
        ]);
        let b = harness_hash(&[
            ("slice.c".into(), "void f(){}".into()),
            ("driver.c".into(), "int main(){}".into()),
        ]);
        assert_eq!(a, b);
        let c = harness_hash(&[("driver.c".into(), "int main(){return 1;}".into())]);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_sources_rejected() {
        let comp = RealCompiler::new(PathBuf::from("clang"), None);
        let err = comp
            .compile_and_link(&CompileRequest::default(), Path::new("/tmp"))
            .unwrap_err();
        assert!(matches!(err, ToolchainError::NoSources));
    }

    #[test]
    fn missing_engine_is_environment_error() {
        let se = RealSymbolicExecutor::new(PathBuf::from("definitely-not-a-real-engine"));
        let dir = tempfile::tempdir().unwrap();
        let bc = dir.path().join("x.bc");
        std::fs::write(&bc, "bc").unwrap();
        match se.run(&bc, &SeConfig::default(), dir.path()) {
            Err(ToolchainError::Environment { tool }) => {
                assert!(tool.contains("definitely-not"))
            }
            other => panic!("expected environment error, got {other:?}"),
        }
    }

    #[test]
    fn real_clang_smoke() {
        // Compile-and-link a two-file harness with the system clang when one
        // is installed; skip silently otherwise.
        let Ok(comp) = RealCompiler::discover() else {
            return;
        };
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.c");
        let b = dir.path().join("b.c");
        std::fs::write(&a, "int helper(int);\nint main(void){ return helper(1); }\n").unwrap();
        std::fs::write(&b, "int helper(int x){ return x + 1; }\n").unwrap();
        let req = CompileRequest {
            sources: vec![a, b],
            ..Default::default()
        };
        match comp.compile_and_link(&req, dir.path()).unwrap() {
            CompileOutcome::Bitcode(path) => {
                let bytes = std::fs::read(path).unwrap();
                assert_eq!(&bytes[..2], b"BC");
            }
            CompileOutcome::Diagnostic(d) => panic!("unexpected diagnostic: {d}"),
        }
    }

    #[test]
    fn real_clang_diagnostic_on_bad_code() {
        let Ok(comp) = RealCompiler::discover() else {
            return;
        };
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("bad.c");
        std::fs::write(&a, "int main(void){ return undeclared_thing; }\n").unwrap();
        let req = CompileRequest {
            sources: vec![a],
            ..Default::default()
        };
        match comp.compile_and_link(&req, dir.path()).unwrap() {
            CompileOutcome::Diagnostic(d) => assert!(d.contains("undeclared")),
            CompileOutcome::Bitcode(_) => panic!("bad code compiled"),
        }
    }
}

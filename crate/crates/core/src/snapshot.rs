//! Read-only view of the project source tree.
//!
//! All pipeline stages (fact extraction, call-graph construction, LLM source
//! tools) read project files through a [`ProjectSnapshot`]. File contents are
//! read once and cached, so concurrent sessions share one copy, and every
//! path is confined to the snapshot root: no absolute paths, no `..`
//! components, no symlinks escaping the tree.

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::RwLock;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot root {0:?} is not a directory")]
    BadRoot(PathBuf),
    #[error("path {0:?} escapes the sandbox")]
    PathEscape(PathBuf),
    #[error("file {0:?} not found in snapshot")]
    NotFound(PathBuf),
    #[error("file {0:?} is not valid UTF-8")]
    NotUtf8(PathBuf),
    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Cached, sandboxed view of a project tree rooted at a canonical directory.
pub struct ProjectSnapshot {
    root: PathBuf,
    files: Vec<PathBuf>,
    cache: RwLock<HashMap<PathBuf, std::sync::Arc<String>>>,
}

const SOURCE_EXTS: &[&str] = &[
    "c", "h", "cc", "hh", "cpp", "hpp", "cxx", "hxx", "inc", "inl",
];

impl ProjectSnapshot {
    /// Open a snapshot. Walks the tree once and records every regular file,
    /// sorted for deterministic iteration order.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, SnapshotError> {
        let root = root
            .as_ref()
            .canonicalize()
            .map_err(|e| SnapshotError::Io {
                path: root.as_ref().to_path_buf(),
                source: e,
            })?;
        if !root.is_dir() {
            return Err(SnapshotError::BadRoot(root));
        }
        let mut files = Vec::new();
        for entry in walkdir::WalkDir::new(&root).follow_links(false) {
            let entry = entry.map_err(|e| SnapshotError::Io {
                path: root.clone(),
                source: e.into(),
            })?;
            if entry.file_type().is_file() {
                if let Ok(rel) = entry.path().strip_prefix(&root) {
                    files.push(rel.to_path_buf());
                }
            }
        }
        files.sort();
        Ok(Self {
            root,
            files,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Every regular file in the tree, project-relative, sorted.
    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    /// C/C++ source and header files, project-relative, sorted.
    pub fn source_files(&self) -> impl Iterator<Item = &PathBuf> {
        self.files.iter().filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| SOURCE_EXTS.contains(&e.to_ascii_lowercase().as_str()))
                .unwrap_or(false)
        })
    }

    /// Validate a relative path against the sandbox and return its absolute
    /// location. Rejects absolute paths and any `..` component, then resolves
    /// symlinks and re-checks that the target stays under the root.
    pub fn resolve(&self, rel: impl AsRef<Path>) -> Result<PathBuf, SnapshotError> {
        let rel = rel.as_ref();
        confine(&self.root, rel)?;
        let joined = self.root.join(rel);
        // Canonicalize to catch symlinks pointing out of the tree. The file
        // must exist for this to succeed, which is what reads need anyway.
        let canon = joined
            .canonicalize()
            .map_err(|_| SnapshotError::NotFound(rel.to_path_buf()))?;
        if !canon.starts_with(&self.root) {
            return Err(SnapshotError::PathEscape(rel.to_path_buf()));
        }
        Ok(canon)
    }

    /// Read a file as UTF-8 text, cached after the first read.
    pub fn read(&self, rel: impl AsRef<Path>) -> Result<std::sync::Arc<String>, SnapshotError> {
        let rel = rel.as_ref().to_path_buf();
        if let Some(hit) = self.cache.read().expect("cache lock").get(&rel) {
            return Ok(hit.clone());
        }
        let abs = self.resolve(&rel)?;
        let bytes = std::fs::read(&abs).map_err(|e| SnapshotError::Io {
            path: rel.clone(),
            source: e,
        })?;
        let text = String::from_utf8(bytes).map_err(|_| SnapshotError::NotUtf8(rel.clone()))?;
        let arc = std::sync::Arc::new(text);
        self.cache
            .write()
            .expect("cache lock")
            .insert(rel, arc.clone());
        Ok(arc)
    }

    /// Read raw bytes without caching (used for binary-ish probes).
    pub fn read_bytes(&self, rel: impl AsRef<Path>) -> Result<Vec<u8>, SnapshotError> {
        let abs = self.resolve(rel.as_ref())?;
        std::fs::read(&abs).map_err(|e| SnapshotError::Io {
            path: rel.as_ref().to_path_buf(),
            source: e,
        })
    }
}

/// Reject absolute paths and parent-directory escapes without touching the
/// filesystem. Shared by snapshot reads and workdir writes.
pub fn confine(root: &Path, rel: &Path) -> Result<(), SnapshotError> {
    if rel.as_os_str().is_empty() {
        return Err(SnapshotError::PathEscape(rel.to_path_buf()));
    }
    if rel.is_absolute() {
        return Err(SnapshotError::PathEscape(rel.to_path_buf()));
    }
    for comp in rel.components() {
        match comp {
            Component::Normal(_) | Component::CurDir => {}
            _ => return Err(SnapshotError::PathEscape(rel.to_path_buf())),
        }
    }
    let _ = root;
    Ok(())
}

/// Confined write into a working directory: creates parent directories, then
/// verifies the resolved parent still lives under `workdir` (catches symlinked
/// subdirectories) before writing.
pub fn write_confined(
    workdir: &Path,
    rel: &Path,
    contents: &str,
) -> Result<PathBuf, SnapshotError> {
    confine(workdir, rel)?;
    let target = workdir.join(rel);
    let parent = target
        .parent()
        .ok_or_else(|| SnapshotError::PathEscape(rel.to_path_buf()))?;
    std::fs::create_dir_all(parent).map_err(|e| SnapshotError::Io {
        path: parent.to_path_buf(),
        source: e,
    })?;
    let canon_parent = parent.canonicalize().map_err(|e| SnapshotError::Io {
        path: parent.to_path_buf(),
        source: e,
    })?;
    let canon_root = workdir.canonicalize().map_err(|e| SnapshotError::Io {
        path: workdir.to_path_buf(),
        source: e,
    })?;
    if !canon_parent.starts_with(&canon_root) {
        return Err(SnapshotError::PathEscape(rel.to_path_buf()));
    }
    std::fs::write(&target, contents).map_err(|e| SnapshotError::Io {
        path: target.clone(),
        source: e,
    })?;
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scratch_project() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("src")).unwrap();
        std::fs::write(dir.path().join("src/a.c"), "int f(void) { return 1; }\n").unwrap();
        std::fs::write(dir.path().join("README"), "hello\n").unwrap();
        dir
    }

    #[test]
    fn lists_files_sorted() {
        let dir = scratch_project();
        let snap = ProjectSnapshot::open(dir.path()).unwrap();
        assert_eq!(snap.files().len(), 2);
        assert_eq!(snap.source_files().count(), 1);
    }

    #[test]
    fn rejects_escapes() {
        let dir = scratch_project();
        let snap = ProjectSnapshot::open(dir.path()).unwrap();
        assert!(matches!(
            snap.read("../etc/passwd"),
            Err(SnapshotError::PathEscape(_))
        ));
        assert!(matches!(
            snap.read("/etc/passwd"),
            Err(SnapshotError::PathEscape(_))
        ));
        assert!(matches!(
            snap.read("src/../../x"),
            Err(SnapshotError::PathEscape(_))
        ));
    }

    #[cfg(unix)]
    #[test]
    fn rejects_symlink_escape() {
        let dir = scratch_project();
        let outside = tempfile::tempdir().unwrap();
        std::fs::write(outside.path().join("secret.txt"), "s3cret").unwrap();
        std::os::unix::fs::symlink(
            outside.path().join("secret.txt"),
            dir.path().join("link.c"),
        )
        .unwrap();
        let snap = ProjectSnapshot::open(dir.path()).unwrap();
        assert!(matches!(
            snap.read("link.c"),
            Err(SnapshotError::PathEscape(_))
        ));
    }

    #[test]
    fn cache_returns_same_arc() {
        let dir = scratch_project();
        let snap = ProjectSnapshot::open(dir.path()).unwrap();
        let a = snap.read("src/a.c").unwrap();
        let b = snap.read("src/a.c").unwrap();
        assert!(std::sync::Arc::ptr_eq(&a, &b));
    }
}

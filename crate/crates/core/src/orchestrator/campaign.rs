//! Campaign execution: independent sessions over a bounded worker pool.
//!
//! Sessions own their working directories and share only the token ledger
//! and the result collector, both serialized. A failing session is recorded
//! and never aborts the campaign. With deterministic backends, per-spec
//! outcomes are identical for any worker count.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::session::{run_session, SessionContext, SessionStats, TerminalOutcome};
use crate::specgen::VulnSpec;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("campaign has no specs")]
    NoSpecs,
    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub spec_id: String,
    pub file: String,
    pub line: u32,
    pub outcome: TerminalOutcome,
    pub stats: SessionStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionFailure {
    pub spec_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CampaignOutcome {
    pub sessions: Vec<SessionSummary>,
    pub failures: Vec<SessionFailure>,
}

/// Run all specs across `workers` threads. Each session writes its artifacts
/// under `sessions_root/<spec_id>/`. Results come back sorted by spec id.
pub fn run_campaign(
    specs: &[VulnSpec],
    ctx: &SessionContext,
    sessions_root: &Path,
    workers: usize,
) -> Result<CampaignOutcome, CampaignError> {
    if workers == 0 {
        return Err(CampaignError::NoWorkers);
    }
    if specs.is_empty() {
        return Err(CampaignError::NoSpecs);
    }
    std::fs::create_dir_all(sessions_root).map_err(|e| CampaignError::Io {
        path: sessions_root.to_path_buf(),
        source: e,
    })?;

    let queue: Mutex<VecDeque<&VulnSpec>> = Mutex::new(specs.iter().collect());
    let results: Mutex<Vec<SessionSummary>> = Mutex::new(Vec::new());
    let failures: Mutex<Vec<SessionFailure>> = Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        for _ in 0..workers.min(specs.len()) {
            scope.spawn(|| loop {
                let spec = {
                    let mut q = queue.lock().expect("queue lock");
                    match q.pop_front() {
                        Some(s) => s,
                        None => break,
                    }
                };
                let session_dir = sessions_root.join(&spec.spec_id);
                match run_session(spec, ctx, &session_dir) {
                    Ok(record) => {
                        results.lock().expect("results lock").push(SessionSummary {
                            spec_id: spec.spec_id.clone(),
                            file: spec.file.clone(),
                            line: spec.line,
                            outcome: record.outcome,
                            stats: record.stats,
                        });
                    }
                    Err(e) => {
                        failures.lock().expect("failures lock").push(SessionFailure {
                            spec_id: spec.spec_id.clone(),
                            error: e.to_string(),
                        });
                    }
                }
            });
        }
    });

    let mut sessions = results.into_inner().expect("results lock");
    sessions.sort_by(|a, b| a.spec_id.cmp(&b.spec_id));
    let mut failures = failures.into_inner().expect("failures lock");
    failures.sort_by(|a, b| a.spec_id.cmp(&b.spec_id));
    Ok(CampaignOutcome { sessions, failures })
}

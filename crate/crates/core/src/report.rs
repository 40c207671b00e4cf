//! Crash deduplication, campaign statistics, and evidence packaging.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::TokenCount;
use crate::orchestrator::{OutcomeKind, SessionSummary};
use crate::sanitizer::ErrorKind;
use crate::validate::{Verdict, VerdictStatus};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("ledger total {ledger} does not equal the sum of session tokens {sessions}")]
    LedgerMismatch { ledger: u64, sessions: u64 },
    #[error("stats violate the monotone chain: {0}")]
    BrokenChain(String),
    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Deduplication key: the top project frame of a confirmed crash.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CrashKey {
    pub file: String,
    pub function: String,
    pub line: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DedupeGroup {
    /// Lowest spec id in the group; deterministic representative.
    pub representative: String,
    pub count: usize,
}

/// Group confirmed verdicts by (file, function, line). The sum of group
/// counts equals the number of input verdicts.
pub fn dedupe(verdicts: &[&Verdict]) -> BTreeMap<CrashKey, DedupeGroup> {
    let mut groups: BTreeMap<CrashKey, DedupeGroup> = BTreeMap::new();
    for v in verdicts {
        debug_assert_eq!(v.status, VerdictStatus::Confirmed);
        let Some(frame) = &v.crash_frame else {
            continue;
        };
        let key = CrashKey {
            file: frame.file.clone(),
            function: frame.function.clone(),
            line: frame.line,
        };
        groups
            .entry(key)
            .and_modify(|g| {
                g.count += 1;
                if v.spec_id < g.representative {
                    g.representative = v.spec_id.clone();
                }
            })
            .or_insert_with(|| DedupeGroup {
                representative: v.spec_id.clone(),
                count: 1,
            });
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMixEntry {
    pub count: usize,
    pub percent: f64,
}

/// Histogram of confirmed crashes by sanitizer error kind, with percentages
/// of the confirmed total.
pub fn classify_error_mix(verdicts: &[&Verdict]) -> BTreeMap<String, ErrorMixEntry> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0usize;
    for v in verdicts {
        let kind = v
            .trace
            .as_ref()
            .map(|t| t.error_kind.clone())
            .unwrap_or(ErrorKind::Other("unknown".into()));
        *counts.entry(kind.as_str().to_string()).or_default() += 1;
        total += 1;
    }
    counts
        .into_iter()
        .map(|(kind, count)| {
            let percent = if total == 0 {
                0.0
            } else {
                (count as f64) * 100.0 / (total as f64)
            };
            (kind, ErrorMixEntry { count, percent })
        })
        .collect()
}

/// Campaign-level statistics. The chain
/// `unique <= confirmed <= se_detected <= specs_active <= specs_total`
/// holds on every report this module emits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub specs_total: usize,
    pub specs_active: usize,
    pub se_detected: usize,
    pub confirmed: usize,
    pub unique: usize,
    pub stub_crashes: usize,
    pub inconclusive: usize,
    pub tokens: TokenCount,
}

impl CampaignStats {
    pub fn check_chain(&self) -> Result<(), ReportError> {
        let chain = [
            ("unique", self.unique),
            ("confirmed", self.confirmed),
            ("se_detected", self.se_detected),
            ("specs_active", self.specs_active),
            ("specs_total", self.specs_total),
        ];
        for w in chain.windows(2) {
            if w[0].1 > w[1].1 {
                return Err(ReportError::BrokenChain(format!(
                    "{} ({}) > {} ({})",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(())
    }
}

/// Filter-phase counts carried into the report.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct FilterCounts {
    pub total: usize,
    pub active: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignReport {
    pub project: String,
    pub stats: CampaignStats,
    pub error_mix: BTreeMap<String, ErrorMixEntry>,
    pub unique_crashes: Vec<UniqueCrashRow>,
    pub per_spec: Vec<SpecRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniqueCrashRow {
    pub file: String,
    pub function: String,
    pub line: u32,
    pub representative: String,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecRow {
    pub spec_id: String,
    pub file: String,
    pub line: u32,
    pub outcome: String,
    pub verdict: Option<String>,
    pub turns: u32,
    pub se_runs: u32,
    pub tokens: u64,
}

/// Assemble the campaign report from session summaries, validation verdicts,
/// and the token ledger total. Fails when the ledger disagrees with the
/// per-session sums or the monotone chain breaks.
pub fn assemble_campaign_report(
    project: &str,
    counts: FilterCounts,
    sessions: &[SessionSummary],
    verdicts: &[Verdict],
    ledger_total: TokenCount,
) -> Result<CampaignReport, ReportError> {
    let session_token_sum: u64 = sessions.iter().map(|s| s.outcome.tokens.total()).sum();
    if ledger_total.total() != session_token_sum {
        return Err(ReportError::LedgerMismatch {
            ledger: ledger_total.total(),
            sessions: session_token_sum,
        });
    }

    let confirmed: Vec<&Verdict> = verdicts
        .iter()
        .filter(|v| v.status == VerdictStatus::Confirmed)
        .collect();
    let groups = dedupe(&confirmed);
    let stats = CampaignStats {
        specs_total: counts.total,
        specs_active: counts.active,
        se_detected: sessions
            .iter()
            .filter(|s| matches!(s.outcome.kind, OutcomeKind::BugTriggered { .. }))
            .count(),
        confirmed: confirmed.len(),
        unique: groups.len(),
        stub_crashes: verdicts
            .iter()
            .filter(|v| v.status == VerdictStatus::StubCrash)
            .count(),
        inconclusive: sessions
            .iter()
            .filter(|s| matches!(s.outcome.kind, OutcomeKind::Inconclusive))
            .count(),
        tokens: ledger_total,
    };
    stats.check_chain()?;

    let verdict_by_spec: BTreeMap<&str, &Verdict> = verdicts
        .iter()
        .map(|v| (v.spec_id.as_str(), v))
        .collect();
    let per_spec = sessions
        .iter()
        .map(|s| SpecRow {
            spec_id: s.spec_id.clone(),
            file: s.file.clone(),
            line: s.line,
            outcome: match &s.outcome.kind {
                OutcomeKind::BugTriggered { .. } => "bug_triggered".into(),
                OutcomeKind::LikelyFalsePositive => "likely_false_positive".into(),
                OutcomeKind::Inconclusive => "inconclusive".into(),
            },
            verdict: verdict_by_spec.get(s.spec_id.as_str()).map(|v| {
                match v.status {
                    VerdictStatus::Confirmed => "confirmed",
                    VerdictStatus::Unconfirmed => "unconfirmed",
                    VerdictStatus::StubCrash => "stub_crash",
                }
                .to_string()
            }),
            turns: s.outcome.turns_used,
            se_runs: s.outcome.se_runs,
            tokens: s.outcome.tokens.total(),
        })
        .collect();

    Ok(CampaignReport {
        project: project.to_string(),
        stats,
        error_mix: classify_error_mix(&confirmed),
        unique_crashes: groups
            .into_iter()
            .map(|(k, g)| UniqueCrashRow {
                file: k.file,
                function: k.function,
                line: k.line,
                representative: g.representative,
                duplicates: g.count,
            })
            .collect(),
        per_spec,
    })
}

/// Fixed-width text rendering of the headline row, one row per campaign.
pub fn render_text_table(report: &CampaignReport) -> String {
    let s = &report.stats;
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>8} {:>8} {:>6} {:>7} {:>6} {:>10}\n",
        "Project", "#SA", "#Active", "#SE", "#Conf.", "#Uniq.", "Tok."
    ));
    out.push_str(&format!(
        "{:<16} {:>8} {:>8} {:>6} {:>7} {:>6} {:>10}\n",
        report.project,
        s.specs_total,
        s.specs_active,
        s.se_detected,
        s.confirmed,
        s.unique,
        s.tokens.total()
    ));
    if !report.unique_crashes.is_empty() {
        out.push('\n');
        out.push_str("Unique crashes (file:function:line, duplicates):\n");
        for row in &report.unique_crashes {
            out.push_str(&format!(
                "  {}:{}:{}  x{}\n",
                row.file, row.function, row.line, row.duplicates
            ));
        }
    }
    out
}

/// Files collected into one self-contained evidence package.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidencePackage {
    pub spec_id: String,
    pub files: Vec<String>,
}

/// Copy the evidence for one confirmed crash into `package_dir`: the spec,
/// harness sources, SE error report and witnesses, the replay driver, the
/// sanitizer verdict, and the final verified bug document.
pub fn assemble_evidence_package(
    session_dir: &Path,
    outcome: &OutcomeKind,
    replay_source: &str,
    verdict_json: &str,
    verified_bug_json: &str,
    fuzz_seed: Option<(&str, &[u8])>,
    package_dir: &Path,
) -> Result<EvidencePackage, ReportError> {
    let io = |path: &Path| {
        let p = path.to_path_buf();
        move |source: std::io::Error| ReportError::Io { path: p, source }
    };
    std::fs::create_dir_all(package_dir).map_err(io(package_dir))?;
    let mut files = Vec::new();

    let mut copy = |rel: &str| -> Result<(), ReportError> {
        let src = session_dir.join(rel);
        if !src.exists() {
            return Ok(());
        }
        let flat = rel.replace('/', "_");
        let dst = package_dir.join(&flat);
        std::fs::copy(&src, &dst).map_err(io(&src))?;
        files.push(flat);
        Ok(())
    };

    copy("spec.json")?;
    copy("harness/driver.c")?;
    copy("harness/slice.c")?;
    if let OutcomeKind::BugTriggered {
        witness_files,
        error_files,
        ..
    } = outcome
    {
        for w in witness_files {
            copy(w)?;
        }
        for e in error_files {
            copy(e)?;
        }
    }
    for (name, content) in [
        ("replay_driver.c", replay_source),
        ("verdict.json", verdict_json),
        ("verified_bug.json", verified_bug_json),
    ] {
        let dst = package_dir.join(name);
        std::fs::write(&dst, content).map_err(io(&dst))?;
        files.push(name.to_string());
    }
    if let Some((name, bytes)) = fuzz_seed {
        let dst = package_dir.join(name);
        std::fs::write(&dst, bytes).map_err(io(&dst))?;
        files.push(name.to_string());
    }

    let spec_id = session_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let package = EvidencePackage { spec_id, files };
    let manifest = package_dir.join("manifest.json");
    std::fs::write(
        &manifest,
        serde_json::to_string_pretty(&package).expect("package serializes"),
    )
    .map_err(io(&manifest))?;
    Ok(package)
}

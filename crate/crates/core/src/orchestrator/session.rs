//! Per-specification synthesis session: the turn-budgeted state machine
//! driving exploration, authoring, and refinement.
//!
//! One turn is one LLM completion. Turns below the exploration budget execute
//! read-only tool calls; turns below the authoring deadline additionally
//! apply harness writes; every later turn lints, compiles, and symbolically
//! executes the harness, feeding classified diagnostics back. Terminal
//! outcomes: a triggered bug with witnesses, a likely false positive after
//! the post-reach refinement budget, or inconclusive at the turn budget.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::prompt::{
    render_assertion_prompt, render_driver_prompt, render_stub_prompt, PromptBudget,
    PromptBundle, PromptTemplates,
};
use crate::llm::tools::{execute_tool_call, ToolCaps};
use crate::llm::{ChatTurn, LlmBackend, TokenCount, TokenLedger};
use crate::orchestrator::classify::{classify_compile_error, classify_se_outcome, SeOutcome};
use crate::snapshot::ProjectSnapshot;
use crate::specgen::{emit_spec, VulnSpec};
use crate::toolchain::probes::probe_coverage;
use crate::toolchain::{CompileOutcome, CompileRequest, Compiler, SeConfig, SymbolicExecutor};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid budgets: {0}")]
    InvalidBudgets(String),
    #[error("backend failure at turn {turn} (checkpoint at {checkpoint:?}): {message}")]
    Backend {
        turn: u32,
        message: String,
        checkpoint: PathBuf,
    },
    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Turn budgets. Exploration ends at `t_explore`, authoring at `t_author`,
/// the session at `t_max`; `r_max` bounds post-reach refinements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionBudgets {
    pub t_explore: u32,
    pub t_author: u32,
    pub t_max: u32,
    pub r_max: u32,
}

impl Default for SessionBudgets {
    fn default() -> Self {
        Self {
            t_explore: 8,
            t_author: 12,
            t_max: 60,
            r_max: 15,
        }
    }
}

impl SessionBudgets {
    pub fn validate(&self) -> Result<(), SessionError> {
        if self.t_explore <= self.t_author && self.t_author <= self.t_max {
            Ok(())
        } else {
            Err(SessionError::InvalidBudgets(format!(
                "need t_explore <= t_author <= t_max, got {} / {} / {}",
                self.t_explore, self.t_author, self.t_max
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Exploration,
    Authoring,
    Refinement,
}

/// Phase is derived from the turn counter, never stored.
pub fn phase_of(t: u32, budgets: &SessionBudgets) -> Phase {
    if t < budgets.t_explore {
        Phase::Exploration
    } else if t < budgets.t_author {
        Phase::Authoring
    } else {
        Phase::Refinement
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutcomeKind {
    /// Concrete witnesses produced; paths are session-relative.
    BugTriggered {
        error_kind: crate::orchestrator::classify::MemoryErrorKind,
        witness_files: Vec<String>,
        error_files: Vec<String>,
        se_output_dir: String,
    },
    LikelyFalsePositive,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalOutcome {
    #[serde(flatten)]
    pub kind: OutcomeKind,
    pub turns_used: u32,
    pub se_runs: u32,
    pub tokens: TokenCount,
}

/// Counters used by conformance tests and reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStats {
    pub first_authoring_turn: Option<u32>,
    pub first_refinement_turn: Option<u32>,
    pub rejected_early_writes: u32,
    pub writes_applied: u32,
    pub lint_failures: u32,
    pub compile_attempts: u32,
    pub compile_diagnostics: u32,
    pub se_runs: u32,
    pub site_reached_count: u32,
    pub entry_override: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionState {
    pub spec_id: String,
    pub t: u32,
    pub refine_count: u32,
    /// Rebuilt from transcript.jsonl on resume; not part of the checkpoint.
    #[serde(skip)]
    pub transcript: Vec<ChatTurn>,
    /// How many transcript entries are already on disk.
    #[serde(skip)]
    flushed: usize,
    pub outcome: Option<TerminalOutcome>,
    pub stats: SessionStats,
}

impl SessionState {
    fn new(spec_id: &str) -> Self {
        Self {
            spec_id: spec_id.to_string(),
            t: 0,
            refine_count: 0,
            transcript: Vec::new(),
            flushed: 0,
            outcome: None,
            stats: SessionStats::default(),
        }
    }
}

/// Shared backends for a campaign.
pub struct Backends {
    pub llm: Arc<dyn LlmBackend>,
    pub compiler: Arc<dyn Compiler>,
    pub se: Arc<dyn SymbolicExecutor>,
}

/// Everything a session borrows from the campaign.
pub struct SessionContext<'a> {
    pub snapshot: &'a ProjectSnapshot,
    pub backends: &'a Backends,
    pub ledger: &'a TokenLedger,
    pub templates: &'a PromptTemplates,
    pub budgets: SessionBudgets,
    pub se_config: &'a SeConfig,
    pub prompt_budget: PromptBudget,
    pub caps: ToolCaps,
}

#[derive(Debug)]
pub struct SessionRecord {
    pub outcome: TerminalOutcome,
    pub stats: SessionStats,
    pub session_dir: PathBuf,
}

struct HarnessView {
    driver: Option<String>,
    slice: Option<String>,
}

fn read_harness(session_dir: &Path) -> HarnessView {
    let read = |name: &str| std::fs::read_to_string(session_dir.join("harness").join(name)).ok();
    HarnessView {
        driver: read("driver.c"),
        slice: read("slice.c"),
    }
}

fn checkpoint(state: &mut SessionState, session_dir: &Path) -> Result<(), SessionError> {
    let path = session_dir.join("checkpoint.json");
    let json = serde_json::to_string(state).expect("state serializes");
    std::fs::write(&path, json).map_err(io_err(&path))?;
    // Transcript entries are appended, never rewritten.
    if state.flushed < state.transcript.len() {
        let transcript_path = session_dir.join("transcript.jsonl");
        let mut out = String::new();
        for turn in &state.transcript[state.flushed..] {
            out.push_str(&serde_json::to_string(turn).expect("turn serializes"));
            out.push('\n');
        }
        use std::io::Write;
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&transcript_path)
            .map_err(io_err(&transcript_path))?;
        file.write_all(out.as_bytes())
            .map_err(io_err(&transcript_path))?;
        state.flushed = state.transcript.len();
    }
    Ok(())
}

fn load_transcript(session_dir: &Path) -> Vec<ChatTurn> {
    std::fs::read_to_string(session_dir.join("transcript.jsonl"))
        .map(|text| {
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .filter_map(|l| serde_json::from_str(l).ok())
                .collect()
        })
        .unwrap_or_default()
}

fn render_prompt(
    ctx: &SessionContext,
    spec: &VulnSpec,
    state: &SessionState,
    harness: &HarnessView,
    phase: Phase,
) -> PromptBundle {
    let history = &state.transcript;
    match phase {
        Phase::Exploration => {
            render_driver_prompt(ctx.templates, spec, history, ctx.prompt_budget)
        }
        _ => {
            if harness.driver.is_none() {
                render_driver_prompt(ctx.templates, spec, history, ctx.prompt_budget)
            } else if harness.slice.is_none() {
                render_stub_prompt(ctx.templates, spec, None, history, ctx.prompt_budget)
            } else if phase == Phase::Authoring {
                render_assertion_prompt(
                    ctx.templates,
                    spec,
                    harness.driver.as_deref().unwrap_or(""),
                    history,
                    ctx.prompt_budget,
                )
            } else {
                render_stub_prompt(
                    ctx.templates,
                    spec,
                    harness.slice.as_deref(),
                    history,
                    ctx.prompt_budget,
                )
            }
        }
    }
}

/// Check the harness before burning a compile: the driver must define main()
/// and call the entrypoint; in refinement the slice must carry the
/// reachability assertion within three lines after the target statement.
fn lint_harness(
    spec: &VulnSpec,
    harness: &HarnessView,
    entry_override: Option<&str>,
) -> Result<(), String> {
    let driver = harness
        .driver
        .as_deref()
        .ok_or("lint: harness/driver.c does not exist")?;
    if !driver.contains("main(") {
        return Err("lint: driver does not define main()".into());
    }
    let entry = entry_override.unwrap_or(&spec.entrypoint.name);
    if !driver.contains(entry) {
        return Err(format!("lint: driver never calls the entrypoint {entry}"));
    }
    let slice = harness
        .slice
        .as_deref()
        .ok_or("lint: harness/slice.c does not exist")?;
    let target_fn = spec.function.as_deref().unwrap_or(entry);
    if !slice.contains(target_fn) {
        return Err(format!(
            "lint: slice does not contain the target function {target_fn}"
        ));
    }
    let needle = spec.suspect_calls.first().map(|c| format!("{c}("));
    match needle {
        Some(needle) => {
            let lines: Vec<&str> = slice.lines().collect();
            let mut target_line = None;
            for (i, line) in lines.iter().enumerate() {
                if line.contains(&needle) && !line.trim_start().starts_with("//") {
                    target_line = Some(i);
                    // Prefer the occurrence inside the target function body,
                    // i.e. the last one wins only if none found earlier.
                    break;
                }
            }
            match target_line {
                None => Err(format!(
                    "lint: slice does not contain the vulnerable call {needle}...)"
                )),
                Some(i) => {
                    let window_end = (i + 4).min(lines.len());
                    if lines[i..window_end]
                        .iter()
                        .any(|l| l.replace(' ', "").contains("klee_assert(0)"))
                    {
                        Ok(())
                    } else {
                        Err(format!(
                            "lint: no klee_assert(0) within 3 lines after the vulnerable statement (line {})",
                            i + 1
                        ))
                    }
                }
            }
        }
        None => {
            if slice.replace(' ', "").contains("klee_assert(0)") {
                Ok(())
            } else {
                Err("lint: slice carries no klee_assert(0) reachability assertion".into())
            }
        }
    }
}

fn detect_entry_override(content: &str) -> Option<String> {
    for line in content.lines() {
        if let Some(rest) = line.trim().strip_prefix("ENTRYPOINT:") {
            let name = rest.trim();
            if !name.is_empty()
                && name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_')
            {
                return Some(name.to_string());
            }
        }
    }
    None
}

/// Run one synthesis session to a terminal outcome. Session state is
/// checkpointed after every turn; an existing checkpoint in `session_dir`
/// resumes where it left off.
pub fn run_session(
    spec: &VulnSpec,
    ctx: &SessionContext,
    session_dir: &Path,
) -> Result<SessionRecord, SessionError> {
    ctx.budgets.validate()?;
    std::fs::create_dir_all(session_dir).map_err(io_err(session_dir))?;

    let spec_path = session_dir.join("spec.json");
    if !spec_path.exists() {
        std::fs::write(&spec_path, emit_spec(spec)).map_err(io_err(&spec_path))?;
    }

    let checkpoint_path = session_dir.join("checkpoint.json");
    let mut state = if checkpoint_path.exists() {
        let text = std::fs::read_to_string(&checkpoint_path).map_err(io_err(&checkpoint_path))?;
        let mut state: SessionState =
            serde_json::from_str(&text).unwrap_or_else(|_| SessionState::new(&spec.spec_id));
        // A crash between the transcript append and the state write can
        // leave a few extra transcript entries; they stay in the history.
        state.transcript = load_transcript(session_dir);
        state.flushed = state.transcript.len();
        state
    } else {
        SessionState::new(&spec.spec_id)
    };

    if let Some(outcome) = &state.outcome {
        return Ok(SessionRecord {
            outcome: outcome.clone(),
            stats: state.stats.clone(),
            session_dir: session_dir.to_path_buf(),
        });
    }

    while state.t < ctx.budgets.t_max {
        let phase = phase_of(state.t, &ctx.budgets);
        match phase {
            Phase::Authoring if state.stats.first_authoring_turn.is_none() => {
                state.stats.first_authoring_turn = Some(state.t);
            }
            Phase::Refinement if state.stats.first_refinement_turn.is_none() => {
                state.stats.first_refinement_turn = Some(state.t);
            }
            _ => {}
        }

        let harness = read_harness(session_dir);
        let bundle = render_prompt(ctx, spec, &state, &harness, phase);
        let turn = match ctx
            .backends
            .llm
            .complete(&spec.spec_id, state.t, &bundle, true, ctx.ledger)
        {
            Ok(turn) => turn,
            Err(e) => {
                let turn_no = state.t;
                let _ = checkpoint(&mut state, session_dir);
                return Err(SessionError::Backend {
                    turn: turn_no,
                    message: e.to_string(),
                    checkpoint: checkpoint_path.clone(),
                });
            }
        };
        if let Some(name) = detect_entry_override(&turn.content) {
            state.stats.entry_override = Some(name);
        }
        state.transcript.push(turn.clone());

        // Execute tool calls. Writes are rejected during exploration; reads
        // run in every phase.
        for call in &turn.tool_calls {
            let result_text = if call.name.is_write() && phase == Phase::Exploration {
                state.stats.rejected_early_writes += 1;
                "error: write tools are not available during exploration".to_string()
            } else {
                match execute_tool_call(call, ctx.snapshot, session_dir, ctx.caps) {
                    Ok(outcome) => {
                        if call.name.is_write() {
                            state.stats.writes_applied += 1;
                        }
                        outcome.text
                    }
                    Err(e) => format!("error: {e}"),
                }
            };
            state
                .transcript
                .push(ChatTurn::tool_result(&call.call_id, result_text));
        }

        if phase == Phase::Refinement {
            let harness = read_harness(session_dir);
            match lint_harness(spec, &harness, state.stats.entry_override.as_deref()) {
                Err(message) => {
                    state.stats.lint_failures += 1;
                    let classified = classify_compile_error(&message);
                    state.transcript.push(ChatTurn::user(format!(
                        "COMPILE DIAGNOSTIC (class: {:?}):\n{message}\nSuggested fix: {}",
                        classified.class, classified.suggested_fix
                    )));
                }
                Ok(()) => {
                    let slice = harness.slice.as_deref().unwrap_or("");
                    let (probed_slice, manifest) = probe_coverage(slice);
                    let build_dir = session_dir.join("build");
                    std::fs::create_dir_all(&build_dir).map_err(io_err(&build_dir))?;
                    let probed_path = build_dir.join("slice_probed.c");
                    std::fs::write(&probed_path, &probed_slice).map_err(io_err(&probed_path))?;

                    let req = CompileRequest {
                        sources: vec![session_dir.join("harness/driver.c"), probed_path],
                        include_paths: spec
                            .build_context
                            .include_paths
                            .iter()
                            .map(|p| ctx.snapshot.root().join(p))
                            .collect(),
                        defs: spec.build_context.preprocessor_defs.clone(),
                    };
                    state.stats.compile_attempts += 1;
                    let compiled = match ctx.backends.compiler.compile_and_link(&req, session_dir)
                    {
                        Ok(compiled) => compiled,
                        Err(e) => {
                            let turn_no = state.t;
                            let _ = checkpoint(&mut state, session_dir);
                            return Err(SessionError::Backend {
                                turn: turn_no,
                                message: e.to_string(),
                                checkpoint: checkpoint_path.clone(),
                            });
                        }
                    };
                    match compiled {
                        CompileOutcome::Diagnostic(text) => {
                            state.stats.compile_diagnostics += 1;
                            let classified = classify_compile_error(&text);
                            state.transcript.push(ChatTurn::user(format!(
                                "COMPILE DIAGNOSTIC (class: {:?}):\n{text}\nSuggested fix: {}",
                                classified.class, classified.suggested_fix
                            )));
                        }
                        CompileOutcome::Bitcode(bitcode) => {
                            state.stats.se_runs += 1;
                            let run = match ctx.backends.se.run(&bitcode, ctx.se_config, session_dir)
                            {
                                Ok(run) => run,
                                Err(e) => {
                                    let turn_no = state.t;
                                    let _ = checkpoint(&mut state, session_dir);
                                    return Err(SessionError::Backend {
                                        turn: turn_no,
                                        message: e.to_string(),
                                        checkpoint: checkpoint_path.clone(),
                                    });
                                }
                            };
                            let se_outcome = classify_se_outcome(&run.output_dir, &manifest)
                                .map_err(|e| SessionError::Io {
                                    path: run.output_dir.clone(),
                                    source: e,
                                })?;
                            let out_rel = run
                                .output_dir
                                .file_name()
                                .map(|n| n.to_string_lossy().into_owned())
                                .unwrap_or_default();
                            match se_outcome {
                                SeOutcome::BugTriggered {
                                    kind,
                                    error_files,
                                    witness_files,
                                } if !witness_files.is_empty() => {
                                    let outcome = TerminalOutcome {
                                        kind: OutcomeKind::BugTriggered {
                                            error_kind: kind,
                                            witness_files: witness_files
                                                .iter()
                                                .map(|w| format!("{out_rel}/{w}"))
                                                .collect(),
                                            error_files: error_files
                                                .iter()
                                                .map(|e| format!("{out_rel}/{e}"))
                                                .collect(),
                                            se_output_dir: out_rel,
                                        },
                                        turns_used: state.t + 1,
                                        se_runs: state.stats.se_runs,
                                        tokens: ctx.ledger.spec_total(&spec.spec_id),
                                    };
                                    return finish(state, outcome, session_dir);
                                }
                                SeOutcome::BugTriggered { kind, .. } => {
                                    state.transcript.push(ChatTurn::user(format!(
                                        "SE FEEDBACK: a {kind:?} memory error fired but no witness file was produced; simplify the harness so the solver can emit a test case.",
                                    )));
                                }
                                SeOutcome::SiteReached { .. } => {
                                    state.refine_count += 1;
                                    state.stats.site_reached_count += 1;
                                    if state.refine_count > ctx.budgets.r_max {
                                        let outcome = TerminalOutcome {
                                            kind: OutcomeKind::LikelyFalsePositive,
                                            turns_used: state.t + 1,
                                            se_runs: state.stats.se_runs,
                                            tokens: ctx.ledger.spec_total(&spec.spec_id),
                                        };
                                        return finish(state, outcome, session_dir);
                                    }
                                    state.transcript.push(ChatTurn::user(
                                        "SE FEEDBACK: site_reached — the reachability assertion fired but no memory error was detected. Tighten the driver constraints toward the violating values.".to_string(),
                                    ));
                                }
                                SeOutcome::NotReached { entered, missing } => {
                                    let timeout_note = if run.timed_out {
                                        " (run hit the per-run timeout)"
                                    } else {
                                        ""
                                    };
                                    state.transcript.push(ChatTurn::user(format!(
                                        "SE FEEDBACK: not_reached{timeout_note} — functions entered: [{}]; not entered: [{}]. Fix the driver or stubs so execution reaches the target.",
                                        entered.join(", "),
                                        missing.join(", ")
                                    )));
                                }
                            }
                        }
                    }
                }
            }
        }

        state.t += 1;
        checkpoint(&mut state, session_dir)?;
    }

    let outcome = TerminalOutcome {
        kind: OutcomeKind::Inconclusive,
        turns_used: state.t,
        se_runs: state.stats.se_runs,
        tokens: ctx.ledger.spec_total(&spec.spec_id),
    };
    finish(state, outcome, session_dir)
}

fn finish(
    mut state: SessionState,
    outcome: TerminalOutcome,
    session_dir: &Path,
) -> Result<SessionRecord, SessionError> {
    state.outcome = Some(outcome.clone());
    checkpoint(&mut state, session_dir)?;
    let outcome_path = session_dir.join("outcome.json");
    let json = serde_json::to_string_pretty(&outcome).expect("outcome serializes");
    std::fs::write(&outcome_path, json).map_err(io_err(&outcome_path))?;
    Ok(SessionRecord {
        outcome,
        stats: state.stats,
        session_dir: session_dir.to_path_buf(),
    })
}

//! Pipeline CLI: per-phase commands plus a combined `pipeline` command.
//!
//! Phases write versioned artifact directories under the campaign dir
//! (`<campaign>/<phase>/vNNN/`); later phases read the highest version of
//! their prerequisites and fail with a phase-order error when one is
//! missing.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use vulnforge::callgraph::CallGraph;
use vulnforge::config::{latest_version_dir, next_version_dir, BackendKind, PipelineConfig};
use vulnforge::facts::{parse_compile_commands, BuildContext, FactPack};
use vulnforge::ktest::{export_fuzz_seed, parse_ktest};
use vulnforge::llm::mock::{DeterministicLlm, Transcript, TranscriptLlm};
use vulnforge::llm::prompt::{PromptBudget, PromptTemplates};
use vulnforge::llm::provider::{HttpLlm, ProviderConfig};
use vulnforge::llm::tools::ToolCaps;
use vulnforge::llm::{LlmBackend, TokenCount, TokenLedger};
use vulnforge::orchestrator::{
    run_campaign, Backends, CampaignOutcome, OutcomeKind, SessionContext,
};
use vulnforge::replay::make_replay_driver;
use vulnforge::report::{
    assemble_campaign_report, assemble_evidence_package, render_text_table, FilterCounts,
};
use vulnforge::sarif::{parse_sarif, read_records, write_records, FindingRecord};
use vulnforge::specgen::{assemble_spec, emit_spec, filter_specs, VulnSpec};
use vulnforge::toolchain::mock::{MockCompiler, MockSymbolicExecutor, SePlan};
use vulnforge::toolchain::{Compiler, RealCompiler, RealSymbolicExecutor, SymbolicExecutor};
use vulnforge::validate::{
    build_sanitized_library, emit_verified_bug, replay_and_classify, ReplayConfig, Verdict,
    VerdictStatus,
};
use vulnforge::ProjectSnapshot;

#[derive(Parser)]
#[command(
    name = "vulnforge",
    version,
    about = "Turn static-analysis findings into symbolic-execution harnesses and concretely validated crash evidence"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse SARIF inputs into normalized finding records
    Ingest(PhaseArgs),
    /// Enrich findings with fact packs and build context
    Enrich(PhaseArgs),
    /// Assemble and filter self-contained vulnerability specifications
    Spec(PhaseArgs),
    /// Run synthesis sessions over the active specifications
    Run(RunArgs),
    /// Concretely validate every bug-triggered session
    Validate(PhaseArgs),
    /// Aggregate campaign statistics and evidence
    Report(PhaseArgs),
    /// Run every phase in order
    Pipeline(RunArgs),
    /// Dump the heuristic call graph (debugging aid)
    Callgraph(PhaseArgs),
}

#[derive(Args)]
struct PhaseArgs {
    /// Pipeline configuration file
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration file
    #[arg(long)]
    config: PathBuf,
    /// Override the worker count
    #[arg(long)]
    workers: Option<usize>,
    /// Override the LLM backend (mock|real)
    #[arg(long)]
    backend_llm: Option<String>,
    /// Override the compiler backend (mock|real)
    #[arg(long)]
    backend_compiler: Option<String>,
    /// Override the symbolic-execution backend (mock|real)
    #[arg(long)]
    backend_se: Option<String>,
    /// Budget overrides, e.g. t_explore=8,t_author=12,t_max=60,r_max=15
    #[arg(long)]
    budgets: Option<String>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(args) => with_config(&args, cmd_ingest),
        Command::Enrich(args) => with_config(&args, cmd_enrich),
        Command::Spec(args) => with_config(&args, cmd_spec),
        Command::Run(args) => run_with_overrides(args, cmd_run),
        Command::Validate(args) => with_config(&args, cmd_validate),
        Command::Report(args) => with_config(&args, cmd_report),
        Command::Pipeline(args) => run_with_overrides(args, cmd_pipeline),
        Command::Callgraph(args) => with_config(&args, cmd_callgraph),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn with_config(args: &PhaseArgs, f: impl FnOnce(&PipelineConfig) -> Result<()>) -> Result<()> {
    let config = PipelineConfig::load(&args.config)?;
    f(&config)
}

fn run_with_overrides(args: RunArgs, f: impl FnOnce(&PipelineConfig) -> Result<()>) -> Result<()> {
    let mut config = PipelineConfig::load(&args.config)?;
    if let Some(workers) = args.workers {
        config.campaign.workers = workers;
    }
    for (flag, slot) in [
        (&args.backend_llm, &mut config.backends.llm),
        (&args.backend_compiler, &mut config.backends.compiler),
        (&args.backend_se, &mut config.backends.se),
    ] {
        if let Some(raw) = flag {
            *slot = raw.parse().map_err(|e: String| anyhow!(e))?;
        }
    }
    if let Some(budgets) = &args.budgets {
        config.apply_budget_overrides(budgets)?;
    }
    f(&config)
}

fn phase_dir(config: &PipelineConfig, phase: &str) -> PathBuf {
    config.campaign.dir.join(phase)
}

/// Highest existing version of a prerequisite artifact, or a phase-order
/// error naming exactly what is missing.
fn require_artifact(config: &PipelineConfig, phase: &str, file: &str) -> Result<PathBuf> {
    let dir = latest_version_dir(&phase_dir(config, phase)).ok_or_else(|| {
        anyhow!(
            "missing {}/{phase}/vNNN/{file}; run `vulnforge {phase}` first",
            config.campaign.dir.display()
        )
    })?;
    let path = dir.join(file);
    if !path.exists() {
        bail!("missing {}; run `vulnforge {phase}` first", path.display());
    }
    Ok(path)
}

fn new_phase_version(config: &PipelineConfig, phase: &str) -> Result<PathBuf> {
    let dir = next_version_dir(&phase_dir(config, phase));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct IngestSummary {
    findings: usize,
    skipped: usize,
    inputs: Vec<String>,
}

fn cmd_ingest(config: &PipelineConfig) -> Result<()> {
    if config.sarif.inputs.is_empty() {
        bail!("no SARIF inputs configured ([sarif] inputs)");
    }
    let out_dir = new_phase_version(config, "ingest")?;
    let mut findings = Vec::new();
    let mut skipped = 0usize;
    let mut inputs = Vec::new();
    for input in &config.sarif.inputs {
        let bytes = std::fs::read(input)
            .with_context(|| format!("reading SARIF input {}", input.display()))?;
        let parsed = parse_sarif(&bytes)
            .with_context(|| format!("parsing SARIF input {}", input.display()))?;
        log::info!(
            "{}: {} findings, {} skipped",
            input.display(),
            parsed.findings.len(),
            parsed.skipped
        );
        skipped += parsed.skipped;
        findings.extend(parsed.findings);
        inputs.push(
            input
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| input.display().to_string()),
        );
    }
    std::fs::write(out_dir.join("findings.jsonl"), write_records(&findings))?;
    write_json(
        &out_dir.join("summary.json"),
        &IngestSummary {
            findings: findings.len(),
            skipped,
            inputs,
        },
    )?;
    println!(
        "ingest: {} findings ({} skipped) -> {}",
        findings.len(),
        skipped,
        out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct EnrichedRecord {
    finding: FindingRecord,
    facts: FactPack,
}

fn load_build_context(config: &PipelineConfig) -> Result<BuildContext> {
    let path = config
        .project
        .compile_commands
        .clone()
        .unwrap_or_else(|| config.project.root.join("compile_commands.json"));
    if !path.exists() {
        return Ok(BuildContext::default());
    }
    let bytes = std::fs::read(&path)?;
    let (ctx, skipped) = parse_compile_commands(&bytes)?;
    if skipped > 0 {
        log::warn!("{skipped} compile_commands entries lacked a command");
    }
    Ok(ctx.verified_against(&config.project.root))
}

fn cmd_enrich(config: &PipelineConfig) -> Result<()> {
    let findings_path = require_artifact(config, "ingest", "findings.jsonl")?;
    let records = read_records(&std::fs::read_to_string(&findings_path)?)?;
    let snapshot = ProjectSnapshot::open(&config.project.root)
        .with_context(|| format!("opening project root {}", config.project.root.display()))?;
    let build = load_build_context(config)?;
    let out_dir = new_phase_version(config, "enrich")?;
    let mut lines = String::new();
    let mut errors = 0usize;
    for record in records {
        let finding = record.clone().into_finding();
        let facts = match vulnforge::facts::enrich(
            &finding,
            &snapshot,
            &build,
            config.enrich.bounds_window,
        ) {
            Ok(f) => f,
            Err(e) => {
                log::warn!(
                    "enrich {}:{}: {e}",
                    finding.location.file,
                    finding.location.line
                );
                errors += 1;
                FactPack {
                    include_paths: build.include_paths.clone(),
                    preprocessor_defs: build.preprocessor_defs.clone(),
                    ..FactPack::default()
                }
            }
        };
        lines.push_str(&serde_json::to_string(&EnrichedRecord {
            finding: record,
            facts,
        })?);
        lines.push('\n');
    }
    std::fs::write(out_dir.join("enriched.jsonl"), &lines)?;
    write_json(&out_dir.join("build_context.json"), &build)?;
    println!(
        "enrich: fact packs written ({errors} degraded) -> {}",
        out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SpecSummary {
    total: usize,
    active: usize,
    excluded: usize,
}

fn cmd_spec(config: &PipelineConfig) -> Result<()> {
    let enriched_path = require_artifact(config, "enrich", "enriched.jsonl")?;
    let build: BuildContext = serde_json::from_str(&std::fs::read_to_string(require_artifact(
        config,
        "enrich",
        "build_context.json",
    )?)?)?;
    let snapshot = ProjectSnapshot::open(&config.project.root)?;
    let graph = CallGraph::build(&snapshot);
    let strategy = config.strategy()?;
    let rules = match &config.filter.rules {
        Some(path) => vulnforge::filter::FilterRules::load(path)?,
        None => vulnforge::filter::FilterRules::shipped_defaults(),
    };

    let mut specs = Vec::new();
    for line in std::fs::read_to_string(&enriched_path)?.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EnrichedRecord = serde_json::from_str(line)?;
        let finding = record.finding.into_finding();
        specs.push(assemble_spec(
            &finding,
            &record.facts,
            &graph,
            &strategy,
            &build,
        ));
    }
    let total = specs.len();
    let (active, excluded) = filter_specs(specs, &rules);

    let out_dir = new_phase_version(config, "spec")?;
    let mut active_lines = String::new();
    for spec in &active {
        active_lines.push_str(&serde_json::to_string(spec)?);
        active_lines.push('\n');
    }
    std::fs::write(out_dir.join("specs.jsonl"), active_lines)?;
    let mut excluded_lines = String::new();
    for record in &excluded {
        excluded_lines.push_str(&serde_json::to_string(record)?);
        excluded_lines.push('\n');
    }
    std::fs::write(out_dir.join("excluded.jsonl"), excluded_lines)?;
    std::fs::write(out_dir.join("callgraph.json"), graph.to_json())?;
    // The external spec documents, one per active target.
    let docs_dir = out_dir.join("docs");
    std::fs::create_dir_all(&docs_dir)?;
    for spec in &active {
        std::fs::write(
            docs_dir.join(format!("{}.json", spec.spec_id)),
            emit_spec(spec),
        )?;
    }
    write_json(
        &out_dir.join("summary.json"),
        &SpecSummary {
            total,
            active: active.len(),
            excluded: excluded.len(),
        },
    )?;
    println!(
        "spec: {} active, {} excluded (of {}) -> {}",
        active.len(),
        excluded.len(),
        total,
        out_dir.display()
    );
    Ok(())
}

fn load_specs(config: &PipelineConfig) -> Result<Vec<VulnSpec>> {
    let path = require_artifact(config, "spec", "specs.jsonl")?;
    let mut specs = Vec::new();
    for line in std::fs::read_to_string(&path)?.lines() {
        if line.trim().is_empty() {
            continue;
        }
        specs.push(serde_json::from_str(line)?);
    }
    Ok(specs)
}

fn build_backends(config: &PipelineConfig) -> Result<Backends> {
    let llm: Arc<dyn LlmBackend> = match config.backends.llm {
        BackendKind::Real => Arc::new(HttpLlm::from_env(ProviderConfig {
            endpoint: config.llm.endpoint.clone(),
            model: config.llm.model.clone(),
            api_key_env: config.llm.api_key_env.clone(),
            ..ProviderConfig::default()
        })?),
        BackendKind::Mock => match &config.llm.transcript {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading transcript {}", path.display()))?;
                Arc::new(TranscriptLlm::new(Transcript::from_json(&text)?))
            }
            None => Arc::new(DeterministicLlm {
                author_turn: config.budgets.t_explore,
            }),
        },
    };
    let compiler: Arc<dyn Compiler> = match config.backends.compiler {
        BackendKind::Real => Arc::new(RealCompiler::discover()?),
        BackendKind::Mock => match &config.mock.compiler_plan {
            Some(path) => Arc::new(MockCompiler::from_json(&std::fs::read_to_string(path)?)?),
            None => Arc::new(MockCompiler::always_success()),
        },
    };
    let se: Arc<dyn SymbolicExecutor> = match config.backends.se {
        BackendKind::Real => Arc::new(RealSymbolicExecutor::discover()?),
        BackendKind::Mock => match &config.mock.se_plan {
            Some(path) => Arc::new(MockSymbolicExecutor::from_json(&std::fs::read_to_string(
                path,
            )?)?),
            None => Arc::new(MockSymbolicExecutor::new(SePlan::default())),
        },
    };
    Ok(Backends { llm, compiler, se })
}

#[derive(Debug, Serialize, Deserialize)]
struct LedgerDump {
    per_spec: std::collections::BTreeMap<String, TokenCount>,
    total: TokenCount,
}

fn cmd_run(config: &PipelineConfig) -> Result<()> {
    let specs = load_specs(config)?;
    if specs.is_empty() {
        bail!("no active specs to run; the filter excluded everything");
    }
    let snapshot = ProjectSnapshot::open(&config.project.root)?;
    let backends = build_backends(config)?;
    let ledger = TokenLedger::default();
    let templates = match &config.llm.prompt_dir {
        Some(dir) => PromptTemplates::load_overrides(dir),
        None => PromptTemplates::default(),
    };
    let ctx = SessionContext {
        snapshot: &snapshot,
        backends: &backends,
        ledger: &ledger,
        templates: &templates,
        budgets: config.budgets,
        se_config: &config.se,
        prompt_budget: PromptBudget {
            max_chars: config.llm.context_budget_chars,
        },
        caps: ToolCaps::default(),
    };
    let out_dir = new_phase_version(config, "run")?;
    let sessions_root = out_dir.join("sessions");
    let outcome = run_campaign(&specs, &ctx, &sessions_root, config.campaign.workers)?;
    write_json(&out_dir.join("campaign.json"), &outcome)?;
    write_json(
        &out_dir.join("ledger.json"),
        &LedgerDump {
            per_spec: ledger.per_spec(),
            total: ledger.project_total(),
        },
    )?;
    let bugs = outcome
        .sessions
        .iter()
        .filter(|s| matches!(s.outcome.kind, OutcomeKind::BugTriggered { .. }))
        .count();
    println!(
        "run: {} sessions ({} bug_triggered, {} failures) -> {}",
        outcome.sessions.len(),
        bugs,
        outcome.failures.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_validate(config: &PipelineConfig) -> Result<()> {
    let campaign_path = require_artifact(config, "run", "campaign.json")?;
    let run_dir = campaign_path.parent().expect("campaign.json has parent");
    let campaign: CampaignOutcome =
        serde_json::from_str(&std::fs::read_to_string(&campaign_path)?)?;
    let specs = load_specs(config)?;
    let spec_by_id: std::collections::BTreeMap<&str, &VulnSpec> =
        specs.iter().map(|s| (s.spec_id.as_str(), s)).collect();

    let out_dir = new_phase_version(config, "validate")?;
    let bug_sessions: Vec<_> = campaign
        .sessions
        .iter()
        .filter(|s| matches!(s.outcome.kind, OutcomeKind::BugTriggered { .. }))
        .collect();
    if bug_sessions.is_empty() {
        std::fs::write(out_dir.join("verdicts.jsonl"), "")?;
        println!(
            "validate: no bug_triggered sessions; empty verdict set -> {}",
            out_dir.display()
        );
        return Ok(());
    }

    let build_script = config.project.build_script.as_ref().ok_or_else(|| {
        anyhow!("bug_triggered sessions exist but [project] build_script is not configured")
    })?;
    let archive =
        build_sanitized_library(&config.project.root, build_script, &out_dir.join("build"))?;
    log::info!("sanitized archive: {}", archive.display());

    let callgraph_path = require_artifact(config, "spec", "callgraph.json")?;
    let graph: CallGraph = serde_json::from_str(&std::fs::read_to_string(&callgraph_path)?)?;
    let project_symbols: BTreeSet<String> = graph.edges.keys().cloned().collect();

    let mut replay_config = ReplayConfig::discover()?;
    replay_config.project_symbols = project_symbols;

    let mut verdict_lines = String::new();
    let mut confirmed = 0usize;
    for session in bug_sessions {
        let spec = spec_by_id
            .get(session.spec_id.as_str())
            .ok_or_else(|| anyhow!("spec {} missing from specs.jsonl", session.spec_id))?;
        let session_dir = run_dir.join("sessions").join(&session.spec_id);
        let OutcomeKind::BugTriggered { witness_files, .. } = &session.outcome.kind else {
            continue;
        };
        let witness_rel = witness_files
            .first()
            .ok_or_else(|| anyhow!("bug outcome without witness files"))?;
        let witness_bytes = std::fs::read(session_dir.join(witness_rel))?;
        let wf = parse_ktest(&witness_bytes)?;
        let driver = std::fs::read_to_string(session_dir.join("harness/driver.c"))?;

        replay_config.include_paths = spec
            .build_context
            .include_paths
            .iter()
            .map(|p| config.project.root.join(p))
            .collect();

        let verdict = match make_replay_driver(&driver, &wf) {
            Ok(replay) => {
                let verdict = replay_and_classify(
                    &replay,
                    &archive,
                    &config.project.root,
                    &session.spec_id,
                    witness_rel,
                    &replay_config,
                )?;
                if verdict.status == VerdictStatus::Confirmed {
                    confirmed += 1;
                    let verified = emit_verified_bug(&verdict, &wf, spec)?;
                    let verified_dir = out_dir.join("verified");
                    std::fs::create_dir_all(&verified_dir)?;
                    std::fs::write(
                        verified_dir.join(format!("{}.json", session.spec_id)),
                        &verified,
                    )?;
                    let seed = wf
                        .objects
                        .iter()
                        .max_by_key(|o| o.bytes.len())
                        .and_then(|o| {
                            export_fuzz_seed(&wf, &o.name)
                                .ok()
                                .map(|bytes| (format!("fuzz_seed_{}.bin", o.name), bytes))
                        });
                    assemble_evidence_package(
                        &session_dir,
                        &session.outcome.kind,
                        &replay.source,
                        &serde_json::to_string_pretty(&verdict)?,
                        &verified,
                        seed.as_ref().map(|(n, b)| (n.as_str(), b.as_slice())),
                        &out_dir.join("evidence").join(&session.spec_id),
                    )?;
                }
                verdict
            }
            Err(e) => Verdict {
                status: VerdictStatus::Unconfirmed,
                spec_id: session.spec_id.clone(),
                trace: None,
                crash_frame: None,
                witness: witness_rel.clone(),
                reason: Some(format!("replay transform failed: {e}")),
            },
        };
        verdict_lines.push_str(&serde_json::to_string(&verdict)?);
        verdict_lines.push('\n');
    }
    std::fs::write(out_dir.join("verdicts.jsonl"), verdict_lines)?;
    println!("validate: {confirmed} confirmed -> {}", out_dir.display());
    Ok(())
}

fn cmd_report(config: &PipelineConfig) -> Result<()> {
    let spec_summary: SpecSummary = serde_json::from_str(&std::fs::read_to_string(
        require_artifact(config, "spec", "summary.json")?,
    )?)?;
    let campaign: CampaignOutcome = serde_json::from_str(&std::fs::read_to_string(
        require_artifact(config, "run", "campaign.json")?,
    )?)?;
    let ledger: LedgerDump = serde_json::from_str(&std::fs::read_to_string(require_artifact(
        config,
        "run",
        "ledger.json",
    )?)?)?;
    let verdicts_path = require_artifact(config, "validate", "verdicts.jsonl")?;
    let mut verdicts: Vec<Verdict> = Vec::new();
    for line in std::fs::read_to_string(&verdicts_path)?.lines() {
        if !line.trim().is_empty() {
            verdicts.push(serde_json::from_str(line)?);
        }
    }

    let report = assemble_campaign_report(
        &config.project.name,
        FilterCounts {
            total: spec_summary.total,
            active: spec_summary.active,
        },
        &campaign.sessions,
        &verdicts,
        ledger.total,
    )?;
    let out_dir = new_phase_version(config, "report")?;
    write_json(&out_dir.join("report.json"), &report)?;
    let table = render_text_table(&report);
    std::fs::write(out_dir.join("report.txt"), &table)?;
    print!("{table}");
    println!("report -> {}", out_dir.display());
    Ok(())
}

fn cmd_pipeline(config: &PipelineConfig) -> Result<()> {
    cmd_ingest(config)?;
    cmd_enrich(config)?;
    cmd_spec(config)?;
    cmd_run(config)?;
    cmd_validate(config)?;
    cmd_report(config)?;
    Ok(())
}

fn cmd_callgraph(config: &PipelineConfig) -> Result<()> {
    let snapshot = ProjectSnapshot::open(&config.project.root)?;
    let graph = CallGraph::build(&snapshot);
    println!("{}", graph.to_json());
    Ok(())
}

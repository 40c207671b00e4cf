//! Declarative pipeline configuration: one TOML file with environment
//! variable interpolation, plus helpers for the versioned campaign
//! directory layout.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::callgraph::EntrypointStrategy;
use crate::orchestrator::SessionBudgets;
use crate::toolchain::SeConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path:?}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("bad budget override {0:?} (expected k=v with k in t_explore/t_author/t_max/r_max)")]
    BadBudget(String),
    #[error("bad entrypoint strategy {0:?}")]
    BadStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Real,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "real" => Ok(BackendKind::Real),
            other => Err(format!("expected mock|real, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectSection {
    pub root: PathBuf,
    #[serde(default = "default_project_name")]
    pub name: String,
    #[serde(default)]
    pub build_script: Option<PathBuf>,
    #[serde(default)]
    pub compile_commands: Option<PathBuf>,
}

fn default_project_name() -> String {
    "project".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignSection {
    pub dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    2
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SarifSection {
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FilterSection {
    /// Path to a filter-rules TOML; the shipped defaults when absent.
    #[serde(default)]
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrichSection {
    #[serde(default = "default_bounds_window")]
    pub bounds_window: u32,
}

fn default_bounds_window() -> u32 {
    crate::facts::BOUNDS_WINDOW
}

impl Default for EnrichSection {
    fn default() -> Self {
        Self {
            bounds_window: default_bounds_window(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendsSection {
    #[serde(default = "default_mock")]
    pub llm: BackendKind,
    #[serde(default = "default_mock")]
    pub compiler: BackendKind,
    #[serde(default = "default_mock")]
    pub se: BackendKind,
}

fn default_mock() -> BackendKind {
    BackendKind::Mock
}

impl Default for BackendsSection {
    fn default() -> Self {
        Self {
            llm: BackendKind::Mock,
            compiler: BackendKind::Mock,
            se: BackendKind::Mock,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmSection {
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    /// Scripted transcript for the mock backend.
    #[serde(default)]
    pub transcript: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[serde(default)]
    pub prompt_dir: Option<PathBuf>,
    #[serde(default = "default_context_budget")]
    pub context_budget_chars: usize,
}

fn default_endpoint() -> String {
    "https://api.openai.com/v1".into()
}

fn default_model() -> String {
    "gpt-4o".into()
}

fn default_key_env() -> String {
    "LLM_API_KEY".into()
}

fn default_context_budget() -> usize {
    64_000
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            endpoint: default_endpoint(),
            model: default_model(),
            api_key_env: default_key_env(),
            transcript: None,
            prompt_dir: None,
            context_budget_chars: default_context_budget(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockSection {
    #[serde(default)]
    pub se_plan: Option<PathBuf>,
    #[serde(default)]
    pub compiler_plan: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub project: ProjectSection,
    pub campaign: CampaignSection,
    #[serde(default)]
    pub sarif: SarifSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub enrich: EnrichSection,
    #[serde(default)]
    pub budgets: SessionBudgets,
    #[serde(default)]
    pub se: SeConfig,
    #[serde(default)]
    pub backends: BackendsSection,
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub mock: MockSection,
    #[serde(default = "default_strategy")]
    pub entrypoint_strategy: String,
}

fn default_strategy() -> String {
    "llm_infer".to_string()
}

impl PipelineConfig {
    /// Load a config file; `${VAR}` references are replaced from the
    /// environment before parsing, and relative paths are resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let interpolated = interpolate_env(&raw);
        let mut config: PipelineConfig =
            toml::from_str(&interpolated).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        fix(&mut self.project.root);
        fix(&mut self.campaign.dir);
        for input in &mut self.sarif.inputs {
            fix(input);
        }
        if let Some(p) = &mut self.project.build_script {
            fix(p);
        }
        if let Some(p) = &mut self.project.compile_commands {
            fix(p);
        }
        if let Some(p) = &mut self.filter.rules {
            fix(p);
        }
        if let Some(p) = &mut self.llm.transcript {
            fix(p);
        }
        if let Some(p) = &mut self.llm.prompt_dir {
            fix(p);
        }
        if let Some(p) = &mut self.mock.se_plan {
            fix(p);
        }
        if let Some(p) = &mut self.mock.compiler_plan {
            fix(p);
        }
    }

    pub fn strategy(&self) -> Result<EntrypointStrategy, ConfigError> {
        parse_strategy(&self.entrypoint_strategy)
    }

    /// Apply `k=v` budget overrides from the command line.
    pub fn apply_budget_overrides(&mut self, spec: &str) -> Result<(), ConfigError> {
        for pair in spec.split(',').filter(|s| !s.trim().is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| ConfigError::BadBudget(pair.to_string()))?;
            let value: u32 = value
                .trim()
                .parse()
                .map_err(|_| ConfigError::BadBudget(pair.to_string()))?;
            match key.trim() {
                "t_explore" => self.budgets.t_explore = value,
                "t_author" => self.budgets.t_author = value,
                "t_max" => self.budgets.t_max = value,
                "r_max" => self.budgets.r_max = value,
                _ => return Err(ConfigError::BadBudget(pair.to_string())),
            }
        }
        Ok(())
    }
}

pub fn parse_strategy(text: &str) -> Result<EntrypointStrategy, ConfigError> {
    match text {
        "llm_infer" => Ok(EntrypointStrategy::LlmInfer),
        "callgraph_only" => Ok(EntrypointStrategy::CallgraphOnly),
        other => match other.strip_prefix("manual:") {
            Some(name) if !name.trim().is_empty() => {
                Ok(EntrypointStrategy::Manual(name.trim().to_string()))
            }
            _ => Err(ConfigError::BadStrategy(text.to_string())),
        },
    }
}

/// Replace `${VAR}` with the environment value; unset variables become the
/// empty string.
fn interpolate_env(raw: &str) -> String {
    let re = regex::Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("env regex");
    re.replace_all(raw, |caps: &regex::Captures| {
        std::env::var(&caps[1]).unwrap_or_default()
    })
    .into_owned()
}

/// Versioned phase directories: `<campaign>/<phase>/vNNN`. Re-runs append a
/// new version; readers take the highest.
pub fn next_version_dir(phase_dir: &Path) -> PathBuf {
    for n in 1.. {
        let candidate = phase_dir.join(format!("v{n:03}"));
        if !candidate.exists() {
            return candidate;
        }
    }
    unreachable!()
}

pub fn latest_version_dir(phase_dir: &Path) -> Option<PathBuf> {
    let mut versions: Vec<PathBuf> = std::fs::read_dir(phase_dir)
        .ok()?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .map(|n| n.starts_with('v'))
                    .unwrap_or(false)
        })
        .collect();
    versions.sort();
    versions.pop()
}

//! Provider-agnostic LLM gateway: chat types, prompt assembly, source tools,
//! token accounting, and mock backends.

pub mod mock;
pub mod prompt;
pub mod provider;
pub mod tools;

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use prompt::PromptBundle;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt bundle has an empty specification block")]
    EmptyBundle,
    #[error("scripted transcript for spec {spec_id} exhausted at turn {turn}")]
    TranscriptExhausted { spec_id: String, turn: u32 },
    #[error("retriable provider failure after {attempts} attempts: {message}")]
    Retriable {
        message: String,
        attempts: u32,
        retry_after: Duration,
    },
    #[error("provider rejected the request (status {status}): {message}")]
    Provider { status: u16, message: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider not configured: {0}")]
    NotConfigured(String),
    #[error("malformed provider response: {0}")]
    BadResponse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// The fixed tool vocabulary available to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    SourceSearch,
    SourceRead,
    SourceExtract,
    WriteFile,
    ModifyFile,
}

impl ToolName {
    pub const ALL: [ToolName; 5] = [
        ToolName::SourceSearch,
        ToolName::SourceRead,
        ToolName::SourceExtract,
        ToolName::WriteFile,
        ToolName::ModifyFile,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ToolName::SourceSearch => "source_search",
            ToolName::SourceRead => "source_read",
            ToolName::SourceExtract => "source_extract",
            ToolName::WriteFile => "write_file",
            ToolName::ModifyFile => "modify_file",
        }
    }

    /// True for tools that mutate the session workdir.
    pub fn is_write(&self) -> bool {
        matches!(self, ToolName::WriteFile | ToolName::ModifyFile)
    }
}

impl FromStr for ToolName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source_search" => Ok(ToolName::SourceSearch),
            "source_read" => Ok(ToolName::SourceRead),
            "source_extract" => Ok(ToolName::SourceExtract),
            "write_file" => Ok(ToolName::WriteFile),
            "modify_file" => Ok(ToolName::ModifyFile),
            other => Err(format!("unknown tool {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: ToolName,
    pub args: BTreeMap<String, String>,
    pub call_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    /// For tool turns: the assistant tool call this result answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responds_to: Option<String>,
}

impl ChatTurn {
    pub fn assistant(content: impl Into<String>, tool_calls: Vec<ToolCall>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
            tool_calls,
            prompt_tokens: 0,
            completion_tokens: 0,
            responds_to: None,
        }
    }

    pub fn tool_result(call_id: &str, content: impl Into<String>) -> Self {
        Self {
            role: Role::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            prompt_tokens: 0,
            completion_tokens: 0,
            responds_to: Some(call_id.to_string()),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
            tool_calls: Vec::new(),
            prompt_tokens: 0,
            completion_tokens: 0,
            responds_to: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub prompt: u64,
    pub completion: u64,
}

impl TokenCount {
    pub fn total(&self) -> u64 {
        self.prompt + self.completion
    }
}

#[derive(Default)]
struct LedgerInner {
    per_spec: BTreeMap<String, TokenCount>,
    total: TokenCount,
}

/// Token accounting shared across sessions. The only cross-session mutation
/// point in a campaign; serialized behind one lock.
#[derive(Default)]
pub struct TokenLedger {
    inner: Mutex<LedgerInner>,
}

impl TokenLedger {
    pub fn record(&self, spec_id: &str, prompt: u64, completion: u64) {
        let mut inner = self.inner.lock().expect("ledger lock");
        let entry = inner.per_spec.entry(spec_id.to_string()).or_default();
        entry.prompt += prompt;
        entry.completion += completion;
        inner.total.prompt += prompt;
        inner.total.completion += completion;
    }

    pub fn spec_total(&self, spec_id: &str) -> TokenCount {
        self.inner
            .lock()
            .expect("ledger lock")
            .per_spec
            .get(spec_id)
            .copied()
            .unwrap_or_default()
    }

    pub fn project_total(&self) -> TokenCount {
        self.inner.lock().expect("ledger lock").total
    }

    pub fn per_spec(&self) -> BTreeMap<String, TokenCount> {
        self.inner.lock().expect("ledger lock").per_spec.clone()
    }

    /// Project total equals the sum over specs.
    pub fn conserved(&self) -> bool {
        let inner = self.inner.lock().expect("ledger lock");
        let sum = inner.per_spec.values().fold(TokenCount::default(), |a, c| {
            TokenCount {
                prompt: a.prompt + c.prompt,
                completion: a.completion + c.completion,
            }
        });
        sum == inner.total
    }
}

/// Crude but deterministic size-to-token estimate used by mock backends.
pub fn estimate_tokens(text_len: usize) -> u64 {
    (text_len as u64).div_ceil(4)
}

/// One LLM completion. Implementations update the ledger exactly once per
/// successful completion, retries included.
pub trait LlmBackend: Send + Sync {
    fn complete(
        &self,
        spec_id: &str,
        turn: u32,
        bundle: &PromptBundle,
        tools_enabled: bool,
        ledger: &TokenLedger,
    ) -> Result<ChatTurn, LlmError>;
}

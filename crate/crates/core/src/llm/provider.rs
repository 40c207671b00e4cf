//! Real chat-completion provider over HTTP with tool calling.
//!
//! The transport is injectable so retry behavior is testable without a
//! network; the default transport uses ureq. Retriable failures (429, 5xx,
//! transport errors) are retried with linear backoff, and the token ledger
//! records exactly one completion per success.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::prompt::PromptBundle;
use super::tools::tool_schemas;
use super::{ChatTurn, LlmBackend, LlmError, TokenLedger, ToolCall};

#[derive(Debug, Clone)]
pub struct ProviderConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_retries: u32,
    pub backoff: Duration,
    pub request_timeout: Duration,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: "LLM_API_KEY".into(),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            request_timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug)]
pub enum TransportError {
    /// Worth retrying: timeouts, connection failures.
    Retriable(String),
    Fatal(String),
}

/// Minimal HTTP POST abstraction, injectable for tests.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &serde_json::Value,
    ) -> Result<(u16, String), TransportError>;
}

/// ureq-backed transport.
pub struct UreqTransport {
    timeout: Duration,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        Self { timeout }
    }
}

impl HttpTransport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &serde_json::Value,
    ) -> Result<(u16, String), TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut response = req
            .send_json(body)
            .map_err(|e| TransportError::Retriable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Fatal(e.to_string()))?;
        Ok((status, text))
    }
}

/// Chat-completion backend against an OpenAI-compatible endpoint.
pub struct HttpLlm {
    config: ProviderConfig,
    transport: Box<dyn HttpTransport>,
    api_key: String,
}

impl HttpLlm {
    /// Read the API key from the configured environment variable.
    pub fn from_env(config: ProviderConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            LlmError::NotConfigured(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        let transport = Box::new(UreqTransport::new(config.request_timeout));
        Ok(Self {
            config,
            transport,
            api_key,
        })
    }

    pub fn with_transport(
        config: ProviderConfig,
        api_key: String,
        transport: Box<dyn HttpTransport>,
    ) -> Self {
        Self {
            config,
            transport,
            api_key,
        }
    }

    fn request_body(&self, bundle: &PromptBundle, tools_enabled: bool) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user_message()},
            ],
        });
        if tools_enabled {
            body["tools"] = tool_schemas();
        }
        body
    }
}

#[derive(Deserialize)]
struct ApiResponse {
    choices: Vec<ApiChoice>,
    #[serde(default)]
    usage: Option<ApiUsage>,
}

#[derive(Deserialize)]
struct ApiChoice {
    message: ApiMessage,
}

#[derive(Deserialize)]
struct ApiMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    tool_calls: Vec<ApiToolCall>,
}

#[derive(Deserialize)]
struct ApiToolCall {
    id: String,
    function: ApiFunction,
}

#[derive(Deserialize)]
struct ApiFunction {
    name: String,
    arguments: String,
}

#[derive(Deserialize, Default)]
struct ApiUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn parse_response(text: &str) -> Result<ChatTurn, LlmError> {
    let resp: ApiResponse =
        serde_json::from_str(text).map_err(|e| LlmError::BadResponse(e.to_string()))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| LlmError::BadResponse("no choices".into()))?;
    let mut tool_calls = Vec::new();
    for call in choice.message.tool_calls {
        let name = call
            .function
            .name
            .parse()
            .map_err(|e: String| LlmError::BadResponse(e))?;
        let raw_args: serde_json::Value = serde_json::from_str(&call.function.arguments)
            .unwrap_or(serde_json::Value::Null);
        let mut args = BTreeMap::new();
        if let Some(map) = raw_args.as_object() {
            for (k, v) in map {
                let value = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                args.insert(k.clone(), value);
            }
        }
        tool_calls.push(ToolCall {
            name,
            args,
            call_id: call.id,
        });
    }
    let usage = resp.usage.unwrap_or_default();
    let mut turn = ChatTurn::assistant(choice.message.content.unwrap_or_default(), tool_calls);
    turn.prompt_tokens = usage.prompt_tokens;
    turn.completion_tokens = usage.completion_tokens;
    Ok(turn)
}

impl LlmBackend for HttpLlm {
    fn complete(
        &self,
        spec_id: &str,
        _turn: u32,
        bundle: &PromptBundle,
        tools_enabled: bool,
        ledger: &TokenLedger,
    ) -> Result<ChatTurn, LlmError> {
        if bundle.spec_block.is_empty() {
            return Err(LlmError::EmptyBundle);
        }
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let headers = vec![(
            "authorization".to_string(),
            format!("Bearer {}", self.api_key),
        )];
        let body = self.request_body(bundle, tools_enabled);

        let mut last_failure = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff * attempt);
            }
            match self.transport.post_json(&url, &headers, &body) {
                Ok((status, text)) if status == 200 => {
                    let turn = parse_response(&text)?;
                    ledger.record(spec_id, turn.prompt_tokens, turn.completion_tokens);
                    return Ok(turn);
                }
                Ok((status, text)) if status == 429 || status >= 500 => {
                    last_failure = format!("status {status}: {text}");
                }
                Ok((status, text)) => {
                    return Err(LlmError::Provider {
                        status,
                        message: text,
                    });
                }
                Err(TransportError::Retriable(message)) => last_failure = message,
                Err(TransportError::Fatal(message)) => return Err(LlmError::Transport(message)),
            }
        }
        Err(LlmError::Retriable {
            message: last_failure,
            attempts: self.config.max_retries + 1,
            retry_after: self.config.backoff,
        })
    }
}

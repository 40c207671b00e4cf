//! Mock LLM backends.
//!
//! The mock layer is first-class: the whole pipeline (state machine, tool
//! sandbox, budgets, artifacts) is exercised without network access. Three
//! flavors:
//!
//! - [`TranscriptLlm`] replays a scripted conversation keyed by
//!   (spec id, turn index) — deterministic fixtures like the shipped
//!   running example.
//! - [`DeterministicLlm`] procedurally explores, authors a minimal harness
//!   derived from the spec, then idles — for campaign bookkeeping tests.
//! - [`RandomLlm`] emits random valid (and deliberately invalid) actions —
//!   the adversarial backend for state-machine conformance tests.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prompt::PromptBundle;
use super::{estimate_tokens, ChatTurn, LlmBackend, LlmError, TokenLedger, ToolCall, ToolName};

/// One scripted assistant turn.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedTurn {
    pub turn_index: u32,
    #[serde(default)]
    pub assistant_content: String,
    #[serde(default)]
    pub tool_calls: Vec<ScriptedCall>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedCall {
    pub name: String,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
}

/// On-disk transcript: turns per spec id, with an optional fallback script.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(default)]
    pub spec_turns: BTreeMap<String, Vec<ScriptedTurn>>,
    #[serde(default)]
    pub default_turns: Vec<ScriptedTurn>,
}

impl Transcript {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Replays a deterministic transcript keyed by (spec id, turn index).
pub struct TranscriptLlm {
    transcript: Transcript,
}

impl TranscriptLlm {
    pub fn new(transcript: Transcript) -> Self {
        Self { transcript }
    }
}

fn scripted_to_turn(spec_id: &str, turn: u32, scripted: &ScriptedTurn) -> Result<ChatTurn, LlmError> {
    let mut calls = Vec::new();
    for (i, c) in scripted.tool_calls.iter().enumerate() {
        let name: ToolName = c
            .name
            .parse()
            .map_err(|e: String| LlmError::BadResponse(e))?;
        calls.push(ToolCall {
            name,
            args: c.args.clone(),
            call_id: format!("{spec_id}-{turn}-{i}"),
        });
    }
    Ok(ChatTurn::assistant(scripted.assistant_content.clone(), calls))
}

impl LlmBackend for TranscriptLlm {
    fn complete(
        &self,
        spec_id: &str,
        turn: u32,
        bundle: &PromptBundle,
        _tools_enabled: bool,
        ledger: &TokenLedger,
    ) -> Result<ChatTurn, LlmError> {
        if bundle.spec_block.is_empty() {
            return Err(LlmError::EmptyBundle);
        }
        let turns = self
            .transcript
            .spec_turns
            .get(spec_id)
            .unwrap_or(&self.transcript.default_turns);
        let scripted = turns
            .iter()
            .find(|t| t.turn_index == turn)
            .ok_or_else(|| LlmError::TranscriptExhausted {
                spec_id: spec_id.to_string(),
                turn,
            })?;
        let mut chat = scripted_to_turn(spec_id, turn, scripted)?;
        chat.prompt_tokens = estimate_tokens(bundle.rendered_len());
        chat.completion_tokens = estimate_tokens(chat.content.len() + 64 * chat.tool_calls.len());
        ledger.record(spec_id, chat.prompt_tokens, chat.completion_tokens);
        Ok(chat)
    }
}

/// Procedural mock: explore, write a small harness derived from the spec,
/// then idle. Output depends only on (spec document, turn index), so
/// campaigns are order- and worker-count-independent.
pub struct DeterministicLlm {
    /// Turn at which authoring starts; matches the session's t_explore.
    pub author_turn: u32,
}

impl Default for DeterministicLlm {
    fn default() -> Self {
        Self { author_turn: 8 }
    }
}

impl DeterministicLlm {
    fn spec_fields(bundle: &PromptBundle) -> (String, String, String) {
        let doc: serde_json::Value =
            serde_json::from_str(&bundle.spec_block).unwrap_or_default();
        let file = doc["file"].as_str().unwrap_or("target.c").to_string();
        let entry = doc["entrypoint"]["initial"]
            .as_str()
            .or_else(|| doc["entrypoint"].as_str())
            .unwrap_or("entry")
            .to_string();
        let spec_id = doc["spec_id"].as_str().unwrap_or("spec").to_string();
        (file, entry, spec_id)
    }
}

impl LlmBackend for DeterministicLlm {
    fn complete(
        &self,
        spec_id: &str,
        turn: u32,
        bundle: &PromptBundle,
        _tools_enabled: bool,
        ledger: &TokenLedger,
    ) -> Result<ChatTurn, LlmError> {
        if bundle.spec_block.is_empty() {
            return Err(LlmError::EmptyBundle);
        }
        let (file, entry, sid) = Self::spec_fields(bundle);
        let chat = if turn < self.author_turn {
            ChatTurn::assistant(
                format!("exploring {file}"),
                vec![ToolCall {
                    name: ToolName::SourceSearch,
                    args: [("pattern".to_string(), regex::escape(&entry))]
                        .into_iter()
                        .collect(),
                    call_id: format!("{spec_id}-{turn}-0"),
                }],
            )
        } else if turn == self.author_turn {
            let driver = format!(
                "extern void klee_make_symbolic(void *addr, unsigned long nbytes, const char *name);\n\
                 extern int {entry}(unsigned long n);\n\n\
                 /* spec {sid} */\n\
                 int main(void) {{\n    unsigned long n;\n    klee_make_symbolic(&n, sizeof(n), \"input\");\n    {entry}(n);\n    return 0;\n}}\n"
            );
            ChatTurn::assistant(
                "writing driver",
                vec![ToolCall {
                    name: ToolName::WriteFile,
                    args: [
                        ("path".to_string(), "harness/driver.c".to_string()),
                        ("content".to_string(), driver),
                    ]
                    .into_iter()
                    .collect(),
                    call_id: format!("{spec_id}-{turn}-0"),
                }],
            )
        } else if turn == self.author_turn + 1 {
            let slice = format!(
                "extern void klee_assert(int condition);\n\n\
                 /* slice for {file} ({sid}) */\n\
                 int {entry}(unsigned long n) {{\n    if (n > 4) {{\n        klee_assert(0);\n    }}\n    return 0;\n}}\n"
            );
            ChatTurn::assistant(
                "writing slice",
                vec![ToolCall {
                    name: ToolName::WriteFile,
                    args: [
                        ("path".to_string(), "harness/slice.c".to_string()),
                        ("content".to_string(), slice),
                    ]
                    .into_iter()
                    .collect(),
                    call_id: format!("{spec_id}-{turn}-0"),
                }],
            )
        } else {
            ChatTurn::assistant("harness ready; compile and execute", vec![])
        };
        let mut chat = chat;
        chat.prompt_tokens = estimate_tokens(bundle.rendered_len());
        chat.completion_tokens = estimate_tokens(chat.content.len() + 64);
        ledger.record(spec_id, chat.prompt_tokens, chat.completion_tokens);
        Ok(chat)
    }
}

/// Adversarial mock: random valid actions, plus occasional sandbox-hostile
/// paths and malformed writes. Output is a pure function of
/// (seed, spec id, turn index).
pub struct RandomLlm {
    pub seed: u64,
    /// Matches the session's authoring deadline so refinement turns mostly
    /// stop editing and the harness hash stabilizes.
    pub author_deadline: u32,
}

impl RandomLlm {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            author_deadline: 12,
        }
    }

    fn rng_for(&self, spec_id: &str, turn: u32) -> ChaCha8Rng {
        let mut h = 0xcbf29ce484222325u64;
        for b in spec_id.bytes() {
            h = (h ^ b as u64).wrapping_mul(0x100000001b3);
        }
        ChaCha8Rng::seed_from_u64(self.seed ^ h ^ ((turn as u64) << 32))
    }
}

const HOSTILE_PATHS: &[&str] = &[
    "../outside.c",
    "/etc/passwd",
    "a/../../b.c",
    "harness/../../../x",
];

impl LlmBackend for RandomLlm {
    fn complete(
        &self,
        spec_id: &str,
        turn: u32,
        bundle: &PromptBundle,
        _tools_enabled: bool,
        ledger: &TokenLedger,
    ) -> Result<ChatTurn, LlmError> {
        if bundle.spec_block.is_empty() {
            return Err(LlmError::EmptyBundle);
        }
        let mut rng = self.rng_for(spec_id, turn);
        let in_refinement = turn >= self.author_deadline;
        let roll: f64 = rng.random();
        let write_cutoff = if in_refinement { 0.15 } else { 0.45 };

        let chat = if roll < write_cutoff {
            // Write a harness file; sometimes a plausible one, sometimes junk.
            let plausible = rng.random_bool(0.7);
            let (path, content) = if rng.random_bool(0.08) {
                (
                    HOSTILE_PATHS[rng.random_range(0..HOSTILE_PATHS.len())].to_string(),
                    "void x(void) {}".to_string(),
                )
            } else if rng.random_bool(0.5) {
                let body = if plausible {
                    format!(
                        "extern int entry_{n}(int);\nint main(void) {{ return entry_{n}({v}); }}\n",
                        n = rng.random_range(0..3),
                        v = rng.random_range(0..100)
                    )
                } else {
                    format!("garbage {}", rng.random_range(0..1000))
                };
                ("harness/driver.c".to_string(), body)
            } else {
                let body = if plausible {
                    format!(
                        "extern void klee_assert(int);\nint entry_{n}(int v) {{ if (v > {k}) {{ klee_assert(0); }} return 0; }}\n",
                        n = rng.random_range(0..3),
                        k = rng.random_range(0..50)
                    )
                } else {
                    format!("int dangling_{} = ;", rng.random_range(0..1000))
                };
                ("harness/slice.c".to_string(), body)
            };
            ChatTurn::assistant(
                "edit",
                vec![ToolCall {
                    name: ToolName::WriteFile,
                    args: [
                        ("path".to_string(), path),
                        ("content".to_string(), content),
                    ]
                    .into_iter()
                    .collect(),
                    call_id: format!("{spec_id}-{turn}-0"),
                }],
            )
        } else if roll < write_cutoff + 0.35 {
            let name = match rng.random_range(0..3) {
                0 => ToolName::SourceSearch,
                1 => ToolName::SourceRead,
                _ => ToolName::SourceExtract,
            };
            let args: BTreeMap<String, String> = match name {
                ToolName::SourceSearch => {
                    [("pattern".to_string(), "ent".to_string())].into_iter().collect()
                }
                ToolName::SourceRead => {
                    let path = if rng.random_bool(0.15) {
                        HOSTILE_PATHS[rng.random_range(0..HOSTILE_PATHS.len())].to_string()
                    } else {
                        "lib.c".to_string()
                    };
                    [("path".to_string(), path)].into_iter().collect()
                }
                _ => [("name".to_string(), format!("entry_{}", rng.random_range(0..4)))]
                    .into_iter()
                    .collect(),
            };
            ChatTurn::assistant(
                "look",
                vec![ToolCall {
                    name,
                    args,
                    call_id: format!("{spec_id}-{turn}-0"),
                }],
            )
        } else {
            ChatTurn::assistant(format!("pondering turn {turn}"), vec![])
        };
        let mut chat = chat;
        chat.prompt_tokens = estimate_tokens(bundle.rendered_len());
        chat.completion_tokens = estimate_tokens(chat.content.len() + 48);
        ledger.record(spec_id, chat.prompt_tokens, chat.completion_tokens);
        Ok(chat)
    }
}

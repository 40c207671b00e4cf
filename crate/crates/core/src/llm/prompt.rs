//! Prompt assembly: spec block, instantiated rule templates, and a history
//! digest bounded by the context budget.
//!
//! The specification document is always included verbatim and is never
//! truncated; when the rendered size exceeds the budget, the oldest
//! tool-result turns are dropped first and the latest turn is always kept.

use crate::llm::{ChatTurn, Role};
use crate::specgen::{emit_spec, AssertionFamily, VulnSpec};

pub const SYSTEM_TEMPLATE: &str = include_str!("../../assets/prompts/system.txt");
pub const DRIVER_RULES_TEMPLATE: &str = include_str!("../../assets/prompts/driver_rules.txt");
pub const STUB_RULES_TEMPLATE: &str = include_str!("../../assets/prompts/stub_rules.txt");
pub const ASSERTION_RULES_TEMPLATE: &str =
    include_str!("../../assets/prompts/assertion_rules.txt");

/// Rendered-size budget, in characters.
#[derive(Debug, Clone, Copy)]
pub struct PromptBudget {
    pub max_chars: usize,
}

impl Default for PromptBudget {
    fn default() -> Self {
        Self { max_chars: 64_000 }
    }
}

/// Template text sources; defaults come from the crate assets and can be
/// overridden by files on disk.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub system: String,
    pub driver_rules: String,
    pub stub_rules: String,
    pub assertion_rules: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            system: SYSTEM_TEMPLATE.to_string(),
            driver_rules: DRIVER_RULES_TEMPLATE.to_string(),
            stub_rules: STUB_RULES_TEMPLATE.to_string(),
            assertion_rules: ASSERTION_RULES_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplates {
    /// Override any template from `<dir>/{system,driver_rules,stub_rules,assertion_rules}.txt`.
    pub fn load_overrides(dir: &std::path::Path) -> Self {
        let mut t = Self::default();
        for (name, slot) in [
            ("system.txt", &mut t.system),
            ("driver_rules.txt", &mut t.driver_rules),
            ("stub_rules.txt", &mut t.stub_rules),
            ("assertion_rules.txt", &mut t.assertion_rules),
        ] {
            if let Ok(text) = std::fs::read_to_string(dir.join(name)) {
                *slot = text;
            }
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system: String,
    /// The spec document, byte-identical to `emit_spec` output.
    pub spec_block: String,
    pub rule_block: String,
    pub history_digest: String,
}

impl PromptBundle {
    pub fn rendered_len(&self) -> usize {
        self.system.len() + self.spec_block.len() + self.rule_block.len()
            + self.history_digest.len()
    }

    /// The user-message body: spec, rules, then history.
    pub fn user_message(&self) -> String {
        let mut out = String::new();
        out.push_str("SPEC:\n");
        out.push_str(&self.spec_block);
        out.push_str("\n\n");
        out.push_str(&self.rule_block);
        if !self.history_digest.is_empty() {
            out.push_str("\n\nHISTORY:\n");
            out.push_str(&self.history_digest);
        }
        out
    }
}

fn fill(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in substitutions {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    // Template braces doubled for literal C braces.
    out.replace("{{", "{").replace("}}", "}")
}

fn render(
    templates: &PromptTemplates,
    spec: &VulnSpec,
    rule_block: String,
    history: &[ChatTurn],
    budget: PromptBudget,
) -> PromptBundle {
    let spec_block = emit_spec(spec);
    let fixed = templates.system.len() + spec_block.len() + rule_block.len();
    let history_budget = budget.max_chars.saturating_sub(fixed);
    PromptBundle {
        system: templates.system.clone(),
        spec_block,
        rule_block,
        history_digest: digest_history(history, history_budget),
    }
}

/// Driver-synthesis prompt: entry call, symbolic overapproximation,
/// guard bypass, pointer allocation, and symbolic-buffer rules.
pub fn render_driver_prompt(
    templates: &PromptTemplates,
    spec: &VulnSpec,
    history: &[ChatTurn],
    budget: PromptBudget,
) -> PromptBundle {
    let guards = if spec.guards.is_empty() {
        "(none)".to_string()
    } else {
        spec.guards.join(", ")
    };
    let rules = fill(
        &templates.driver_rules,
        &[
            ("entrypoint", spec.entrypoint.name.as_str()),
            ("guards", guards.as_str()),
        ],
    );
    render(templates, spec, rules, history, budget)
}

/// Stub-synthesis prompt: the four stub granularities, plus the
/// use-after-free exception when it applies.
pub fn render_stub_prompt(
    templates: &PromptTemplates,
    spec: &VulnSpec,
    slice_state: Option<&str>,
    history: &[ChatTurn],
    budget: PromptBudget,
) -> PromptBundle {
    let mode_preamble = match slice_state {
        None | Some("") => "AUTHORING: no code slice exists yet. Write harness/slice.c: \
the call chain from the entry function to the vulnerable statement, with \
everything else stubbed."
            .to_string(),
        Some(slice) => {
            let excerpt: String = slice.chars().take(4000).collect();
            let marker = if excerpt.len() < slice.len() {
                "\n... (truncated)"
            } else {
                ""
            };
            format!(
                "REFINEMENT: harness/slice.c exists; modify it with modify_file. Current slice:\n{excerpt}{marker}"
            )
        }
    };
    let uaf_exception = match spec.assertion_template.as_ref().map(|t| t.family) {
        Some(AssertionFamily::Uaf) | Some(AssertionFamily::StalePtr) => {
            "Exception: the free() stub must call the real free() so the \
free-then-use sequence remains intact."
        }
        _ => "",
    };
    let rules = fill(
        &templates.stub_rules,
        &[
            ("mode_preamble", mode_preamble.as_str()),
            ("uaf_exception", uaf_exception),
        ],
    );
    render(templates, spec, rules, history, budget)
}

/// Assertion-instantiation prompt: reachability assertion plus violation
/// constraints derived from the template and the driver's allocations.
pub fn render_assertion_prompt(
    templates: &PromptTemplates,
    spec: &VulnSpec,
    driver_state: &str,
    history: &[ChatTurn],
    budget: PromptBudget,
) -> PromptBundle {
    let property_line = match &spec.assertion_template {
        Some(t) => format!("Safety property to violate: {}", t.template),
        None => "No per-CWE template for this finding: derive the safety property \
from the finding message and the suspect calls."
            .to_string(),
    };
    let violation_hint = violation_hint(spec, driver_state);
    let rules = fill(
        &templates.assertion_rules,
        &[
            ("property_line", property_line.as_str()),
            ("violation_hint", violation_hint.as_str()),
        ],
    );
    render(templates, spec, rules, history, budget)
}

/// For out-of-bounds families, bind the template operands to the driver's
/// buffer allocations: violate the smaller bound, stay within the larger.
fn violation_hint(spec: &VulnSpec, driver_state: &str) -> String {
    match spec.assertion_template.as_ref().map(|t| t.family) {
        Some(AssertionFamily::Oob) => {
            let sizes = alloc_sizes(driver_state);
            match (sizes.iter().min(), sizes.iter().max()) {
                (Some(&lo), Some(&hi)) if lo != hi => format!(
                    "GOOD: klee_assume(sz > {lo}); klee_assume(sz <= {hi});"
                ),
                _ => "GOOD: klee_assume(n > len(dst)); klee_assume(n <= len(src));".to_string(),
            }
        }
        Some(AssertionFamily::NullDeref) => {
            "Leave the guarded pointer NULL on the violating path and let the \
engine flag the dereference."
                .to_string()
        }
        Some(AssertionFamily::Uaf) | Some(AssertionFamily::StalePtr) => {
            "Free the object on the path, keep the dangling pointer, and drive \
the subsequent use."
                .to_string()
        }
        _ => String::new(),
    }
}

fn alloc_sizes(driver: &str) -> Vec<u64> {
    let re = regex::Regex::new(r"\b(?:malloc|calloc)\s*\(\s*(?:1\s*,\s*)?(\d+)\s*\)")
        .expect("alloc regex");
    let mut sizes: Vec<u64> = re
        .captures_iter(driver)
        .filter_map(|c| c[1].parse().ok())
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
}

/// Render history newest-last, dropping oldest tool turns first when over
/// budget, then oldest other turns; the latest turn is always kept whole.
pub fn digest_history(history: &[ChatTurn], budget: usize) -> String {
    #[derive(Clone)]
    struct Rendered {
        role: Role,
        text: String,
    }
    let mut rendered: Vec<Rendered> = history
        .iter()
        .map(|turn| {
            let mut text = match turn.role {
                Role::System => format!("[system] {}", turn.content),
                Role::User => format!("[feedback] {}", turn.content),
                Role::Assistant => format!("[assistant] {}", turn.content),
                Role::Tool => format!("[tool result] {}", turn.content),
            };
            for call in &turn.tool_calls {
                text.push_str(&format!(
                    "\n[tool call] {}({})",
                    call.name.as_str(),
                    serde_json::to_string(&call.args).unwrap_or_default()
                ));
            }
            Rendered {
                role: turn.role,
                text,
            }
        })
        .collect();

    let total = |items: &[Rendered]| items.iter().map(|r| r.text.len() + 1).sum::<usize>();
    while rendered.len() > 1 && total(&rendered) > budget {
        let drop_idx = rendered[..rendered.len() - 1]
            .iter()
            .position(|r| r.role == Role::Tool)
            .unwrap_or(0);
        rendered.remove(drop_idx);
    }
    rendered
        .iter()
        .map(|r| r.text.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

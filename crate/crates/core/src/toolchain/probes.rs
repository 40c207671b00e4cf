//! Coverage probe injection.
//!
//! One uniquely-named `klee_warning_once` call is inserted at the entry of
//! every function definition in the code slice. The engine prints each probe
//! at most once, so the message log tells the classifier which functions in
//! the call chain were entered.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cfunc;

pub const PROBE_DECL: &str = "extern void klee_warning_once(const char *message);";

/// Maps probe name to the function it instruments.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeManifest {
    pub probes: BTreeMap<String, String>,
}

impl ProbeManifest {
    pub fn expected(&self) -> impl Iterator<Item = &str> {
        self.probes.keys().map(String::as_str)
    }
}

/// Inject one probe per function definition. Idempotent: re-injecting an
/// already-probed slice returns the same source and manifest. Probe names
/// collide neither with each other nor with identifiers already in the slice.
pub fn probe_coverage(slice_source: &str) -> (String, ProbeManifest) {
    let defs = cfunc::scan_functions(slice_source);
    let mut manifest = ProbeManifest::default();

    // Identifiers already present, so generated names never collide.
    let ident_re = regex::Regex::new(r"\b([A-Za-z_][A-Za-z0-9_]*)\b").expect("ident regex");
    let clean = cfunc::blank_comments_and_strings(slice_source);
    let mut taken: std::collections::HashSet<String> = ident_re
        .captures_iter(&clean)
        .map(|c| c[1].to_string())
        .collect();

    let existing_probe_re =
        regex::Regex::new(r#"klee_warning_once\s*\(\s*"([^"]*)"\s*\)"#).expect("probe regex");

    let mut insertions: Vec<(usize, String)> = Vec::new();
    for def in &defs {
        let body = &slice_source[def.body_open_byte..def.byte_range.1];
        // Already probed? Record the existing name and move on.
        let head = &body[..body.len().min(200)];
        if let Some(cap) = existing_probe_re.captures(head) {
            manifest
                .probes
                .insert(cap[1].to_string(), def.name.clone());
            continue;
        }
        let mut name = format!("probe_{}", def.name);
        let mut n = 1;
        while taken.contains(&name) || manifest.probes.contains_key(&name) {
            n += 1;
            name = format!("probe_{}_{n}", def.name);
        }
        taken.insert(name.clone());
        manifest.probes.insert(name.clone(), def.name.clone());
        insertions.push((
            def.body_open_byte + 1,
            format!("\n    klee_warning_once(\"{name}\");"),
        ));
    }

    let mut out = slice_source.to_string();
    for (pos, text) in insertions.into_iter().rev() {
        out.insert_str(pos, &text);
    }
    if !manifest.probes.is_empty() && !out.contains("klee_warning_once(const char") {
        out = format!("{PROBE_DECL}\n{out}");
    }
    (out, manifest)
}

//! Heuristic call graph over a project snapshot.
//!
//! Nodes are function names; an edge `f -> g` means some definition of `f`
//! contains an identifier-followed-by-paren occurrence of `g`. Function
//! pointers and virtual dispatch are invisible, and macro noise is expected;
//! the graph only needs to support upward entrypoint search.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cfunc;
use crate::snapshot::ProjectSnapshot;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CallGraph {
    /// caller name -> callee names
    pub edges: BTreeMap<String, BTreeSet<String>>,
    /// Names whose every observed definition is declared `static`.
    pub static_functions: BTreeSet<String>,
}

impl CallGraph {
    /// Scan every C/C++ source file in the snapshot. Multiple definitions of
    /// one name (e.g. under `#ifdef`) contribute the union of their callees;
    /// a name counts as static only if all of its definitions are static.
    pub fn build(snapshot: &ProjectSnapshot) -> Self {
        let mut graph = CallGraph::default();
        let mut nonstatic_seen: BTreeSet<String> = BTreeSet::new();
        let call_re = regex::Regex::new(r"\b([A-Za-z_][A-Za-z0-9_]*)\s*\(").expect("call regex");

        for file in snapshot.source_files() {
            let Ok(source) = snapshot.read(file) else {
                continue;
            };
            let clean = cfunc::blank_comments_and_strings(&source);
            for def in cfunc::scan_functions(&source) {
                let body = &clean[def.byte_range.0..def.byte_range.1];
                let callees = graph.edges.entry(def.name.clone()).or_default();
                for cap in call_re.captures_iter(body) {
                    let callee = &cap[1];
                    if cfunc::is_c_keyword(callee) || callee == def.name {
                        continue;
                    }
                    callees.insert(callee.to_string());
                }
                if def.is_static {
                    graph.static_functions.insert(def.name.clone());
                } else {
                    nonstatic_seen.insert(def.name.clone());
                }
            }
        }
        // Any non-static definition wins.
        for name in nonstatic_seen {
            graph.static_functions.remove(&name);
        }
        graph
    }

    pub fn is_defined(&self, name: &str) -> bool {
        self.edges.contains_key(name)
    }

    pub fn is_static(&self, name: &str) -> bool {
        self.static_functions.contains(name)
    }

    /// Reverse adjacency: callee -> callers.
    pub fn callers_of(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut rev: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (caller, callees) in &self.edges {
            for callee in callees {
                rev.entry(callee.as_str()).or_default().insert(caller);
            }
        }
        rev
    }

    /// JSON adjacency dump for debugging.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("call graph serializes")
    }
}

/// How the entrypoint was chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EntryProvenance {
    /// Supplied by configuration.
    Manual,
    /// Found by upward breadth-first search; distance 0 means the vulnerable
    /// function itself is non-static.
    CallGraph { distance: u32 },
    /// The vulnerable function is not in the graph.
    Unresolved,
    /// Every ancestor (and the function itself) is static.
    NoNonStaticAncestor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntrypointSelection {
    pub name: String,
    pub provenance: EntryProvenance,
    /// True under the default strategy: the LLM may replace the choice
    /// during source exploration.
    pub overridable: bool,
    /// Equal-distance candidates that lost the lexicographic tie-break.
    pub alternates: Vec<String>,
}

/// Entrypoint selection strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "name")]
pub enum EntrypointStrategy {
    /// Call-graph search for an initial choice, overridable by the LLM.
    LlmInfer,
    /// Fixed function name.
    Manual(String),
    /// Call-graph search, not overridable.
    CallgraphOnly,
}

/// Walk the call graph upward from the vulnerable function to the nearest
/// non-static caller. Ties at equal distance break lexicographically.
pub fn select_entrypoint(
    vuln_fn: &str,
    graph: &CallGraph,
    strategy: &EntrypointStrategy,
) -> EntrypointSelection {
    let overridable = matches!(strategy, EntrypointStrategy::LlmInfer);
    if let EntrypointStrategy::Manual(name) = strategy {
        return EntrypointSelection {
            name: name.clone(),
            provenance: EntryProvenance::Manual,
            overridable: false,
            alternates: Vec::new(),
        };
    }
    if !graph.is_defined(vuln_fn) {
        return EntrypointSelection {
            name: vuln_fn.to_string(),
            provenance: EntryProvenance::Unresolved,
            overridable,
            alternates: Vec::new(),
        };
    }
    let callers = graph.callers_of();
    let mut visited: BTreeSet<&str> = BTreeSet::new();
    let mut queue: VecDeque<(&str, u32)> = VecDeque::new();
    visited.insert(vuln_fn);
    queue.push_back((vuln_fn, 0));
    while let Some((_, dist)) = queue.front().copied() {
        // Drain the whole BFS layer so the tie-break sees every candidate at
        // this distance.
        let mut layer: Vec<&str> = Vec::new();
        while let Some(&(_, d)) = queue.front() {
            if d != dist {
                break;
            }
            layer.push(queue.pop_front().expect("front exists").0);
        }
        let mut winners: Vec<&str> = layer
            .iter()
            .copied()
            .filter(|n| !graph.is_static(n))
            .collect();
        winners.sort();
        if let Some(name) = winners.first() {
            return EntrypointSelection {
                name: name.to_string(),
                provenance: EntryProvenance::CallGraph { distance: dist },
                overridable,
                alternates: winners[1..].iter().map(|s| s.to_string()).collect(),
            };
        }
        let mut next_layer: Vec<&str> = Vec::new();
        for node in layer {
            if let Some(parents) = callers.get(node) {
                for &p in parents {
                    if visited.insert(p) {
                        next_layer.push(p);
                    }
                }
            }
        }
        next_layer.sort();
        for p in next_layer {
            queue.push_back((p, dist + 1));
        }
    }
    EntrypointSelection {
        name: vuln_fn.to_string(),
        provenance: EntryProvenance::NoNonStaticAncestor,
        overridable,
        alternates: Vec::new(),
    }
}

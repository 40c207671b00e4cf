//! vulnforge: a pipeline that turns static-analysis findings into
//! symbolic-execution harnesses and concretely validated crash evidence.
//!
//! The pipeline has three phases:
//!
//! 1. **Target generation** — SARIF findings are parsed ([`sarif`]), enriched
//!    with code-level hints ([`facts`]), and assembled into self-contained
//!    vulnerability specifications ([`specgen`], [`callgraph`], [`filter`]).
//! 2. **Harness synthesis** — for each specification, an LLM-driven session
//!    ([`orchestrator`]) iterates a driver, code slice, stubs, and assertions
//!    against compiler and symbolic-execution feedback ([`llm`], [`toolchain`])
//!    until a bug is triggered, the target looks like a false positive, or the
//!    turn budget is exhausted. Witness inputs come back as ktest files
//!    ([`ktest`]).
//! 3. **Concrete validation** — witnesses are replayed against the unmodified,
//!    sanitizer-instrumented project ([`replay`], [`validate`], [`sanitizer`]),
//!    and confirmed crashes are deduplicated and packaged ([`report`]).
//!
//! Every external backend (compiler, symbolic-execution engine, LLM provider)
//! sits behind a trait with a deterministic mock twin, so the full pipeline
//! runs in tests without network access or installed engines.

pub mod callgraph;
pub mod cfunc;
pub mod config;
pub mod facts;
pub mod filter;
pub mod ktest;
pub mod llm;
pub mod orchestrator;
pub mod replay;
pub mod report;
pub mod sanitizer;
pub mod sarif;
pub mod snapshot;
pub mod specgen;
pub mod toolchain;
pub mod validate;

pub use snapshot::ProjectSnapshot;

//! The synthesis state machine: per-spec sessions under turn budgets, with
//! compile and symbolic-execution feedback, executed in parallel campaigns.

pub mod campaign;
pub mod classify;
pub mod session;

pub use campaign::{run_campaign, CampaignError, CampaignOutcome, SessionFailure, SessionSummary};
pub use classify::{
    classify_compile_error, classify_se_outcome, ClassifiedDiagnostic, CompileErrorClass,
    MemoryErrorKind, SeOutcome,
};
pub use session::{
    phase_of, run_session, Backends, OutcomeKind, Phase, SessionBudgets, SessionContext,
    SessionError, SessionRecord, SessionState, SessionStats, TerminalOutcome,
};

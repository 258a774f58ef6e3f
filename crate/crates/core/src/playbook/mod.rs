//! Encoded audit coverage and the deterministic work around it.

mod checks;
mod context;
mod registry;
mod snapshot;

pub use checks::{findings_for, run_builtin_check, EXCERPT_CHARS, PRESENCE_EVIDENCE_LIMIT};
pub use context::{
    build_context, eligible_tasks, BudgetReport, ContextError, ContextPack, ContextSources, DependencyArtifact,
    Excerpt, DOCS_PREFIX, TRUNCATION_MARKER,
};
pub use registry::*;
pub use snapshot::{read_text, RepoSnapshot};

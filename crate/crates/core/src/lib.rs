//! Event-sourced orchestration kernel for governed, replay-verifiable
//! security audits of source repositories.

pub mod agents;
pub mod canonical;
pub mod clock;
pub mod event_store;
pub mod orchestrator;
pub mod paths;
pub mod playbook;
pub mod projection;
pub mod protocol;
pub mod report;
pub mod risk;

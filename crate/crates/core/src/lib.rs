//! Multi-agent interactive diagnosis simulation: patient records, a
//! keyword-routed patient system, a dynamic specialist team, and the
//! evaluation harness.

pub mod dataset;
pub mod doctor;
pub mod eval;
pub mod gateway;
pub mod patient;
pub mod prompts;
pub mod record;
pub mod run;
pub mod transcript;
pub mod visit;
pub mod workflow;

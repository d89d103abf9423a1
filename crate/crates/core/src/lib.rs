//! Conflict-driven medication review for multimorbidity patients.
//!
//! A general-practitioner agent reviews a patient case, detects drug-drug
//! interactions and drug-condition contraindications, optionally convenes a
//! small multidisciplinary team of specialist agents per conflict, and
//! integrates their recommendations into a revised prescription. Revised plans
//! are then scored against clinician-curated gold standards.
//!
//! Module map:
//! - [`case`]: patient cases, prescriptions, conflicts, lexicons, gold standards
//! - [`gateway`]: chat-completion backends (HTTP, scripted, replay) and transcripts
//! - [`roles`]: agent roles, prompt templates, reply-block parsing, consensus
//! - [`workflow`]: the pure, single-agent and multi-agent pipelines
//! - [`eval`]: action classification, ratio metrics, Likert aggregation, radar export
//! - [`store`]: run directories on disk and report tables

pub mod case;
pub mod eval;
pub mod gateway;
pub mod roles;
pub mod store;
pub mod workflow;

/// Version written into every persisted document.
pub const SCHEMA_VERSION: u32 = 1;

//! The three review pipelines.
//!
//! * `pure`: the GP proposes a revised plan in one exchange.
//! * `single_agent`: the GP identifies goals, then conflicts, then writes the plan.
//! * `multi_agent`: as `single_agent`, but each detected conflict is routed to a
//!   small team of specialists (or kept by the GP), resolved directly or in a
//!   round-limited forum with a mediator fallback, and the GP integrates the
//!   resolutions into the revised plan.

mod engine;

pub use engine::{run_pipeline, Session};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;

use crate::case::{ConflictSet, Prescription};
use crate::gateway::{GatewayError, SamplingDefaults};
use crate::roles::{AgentRole, GoalItem, ProposedAction, RoleError, SpecialistStatement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Pure,
    SingleAgent,
    MultiAgent,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 3] = [PipelineKind::Pure, PipelineKind::SingleAgent, PipelineKind::MultiAgent];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Pure => "pure",
            PipelineKind::SingleAgent => "single_agent",
            PipelineKind::MultiAgent => "multi_agent",
        }
    }

    /// Short name used in run ids and on the command line.
    pub fn short(self) -> &'static str {
        match self {
            PipelineKind::Pure => "pure",
            PipelineKind::SingleAgent => "single",
            PipelineKind::MultiAgent => "multi",
        }
    }
}

impl FromStr for PipelineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "pure" => Ok(PipelineKind::Pure),
            "single" | "single_agent" => Ok(PipelineKind::SingleAgent),
            "multi" | "multi_agent" => Ok(PipelineKind::MultiAgent),
            other => Err(format!("unknown pipeline `{other}` (expected pure, single or multi)")),
        }
    }
}

impl std::fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_MAX_ROUNDS: u32 = 5;
pub const DEFAULT_MAX_SPECIALTIES: usize = 3;
pub const DEFAULT_EXCHANGE_BUDGET: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForumConfig {
    pub max_rounds: u32,
    /// Whether each specialist sees the statements made earlier in the same round.
    pub sequential_visibility: bool,
}

impl Default for ForumConfig {
    fn default() -> Self {
        ForumConfig { max_rounds: DEFAULT_MAX_ROUNDS, sequential_visibility: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub pipeline: PipelineKind,
    pub model_id: String,
    pub forum: ForumConfig,
    pub max_specialties_per_conflict: usize,
    /// Hard cap on exchanges per run, repairs included.
    pub exchange_budget: usize,
    pub sampling: SamplingDefaults,
}

impl RunConfig {
    pub fn new(pipeline: PipelineKind, model_id: impl Into<String>) -> Self {
        RunConfig {
            pipeline,
            model_id: model_id.into(),
            forum: ForumConfig::default(),
            max_specialties_per_conflict: DEFAULT_MAX_SPECIALTIES,
            exchange_budget: DEFAULT_EXCHANGE_BUDGET,
            sampling: SamplingDefaults::default(),
        }
    }

    pub fn validate(&self) -> Result<(), WorkflowError> {
        let fail = |m: &str| Err(WorkflowError::InvalidConfig(m.into()));
        if self.model_id.trim().is_empty() {
            return fail("model_id must be non-empty");
        }
        if self.forum.max_rounds < 1 {
            return fail("forum.max_rounds must be at least 1");
        }
        if self.max_specialties_per_conflict < 1 {
            return fail("max_specialties_per_conflict must be at least 1");
        }
        if self.exchange_budget < 1 {
            return fail("exchange_budget must be at least 1");
        }
        Ok(())
    }
}

/// Specialists routed to one conflict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdtEntry {
    pub conflict_id: String,
    pub specialties: Vec<String>,
}

/// Outcome of MDT formation. Every detected conflict appears exactly once,
/// either in `entries` (non-empty specialty list) or in `gp_resolved`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdtAssignment {
    pub entries: Vec<MdtEntry>,
    pub gp_resolved: Vec<String>,
    /// One agent per distinct specialty across all entries, sorted by id.
    pub roster: Vec<AgentRole>,
}

impl MdtAssignment {
    pub fn entry(&self, conflict_id: &str) -> Option<&MdtEntry> {
        self.entries.iter().find(|e| e.conflict_id == conflict_id)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.gp_resolved.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub conflict_id: String,
    pub recommendation: Vec<ProposedAction>,
    pub rationale: String,
    pub rounds_used: u32,
    pub mediator_invoked: bool,
    pub contributing_agents: Vec<String>,
    /// The GP kept this conflict instead of convening specialists.
    #[serde(default)]
    pub gp_resolved: bool,
    /// Forum statements in order; empty for direct resolutions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<SpecialistStatement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    /// A revised-plan medication is neither in the original plan nor named by any resolution.
    ProvenanceViolation,
    /// Two resolutions propose different actions for the same drug.
    ResolutionOverlap,
    /// The GP proposed more specialties than the per-conflict cap.
    SpecialtyCapApplied,
    /// A detected contraindication names a condition the case does not list.
    UnknownCondition,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunWarning {
    pub kind: WarningKind,
    pub subject: String,
    pub message: String,
}

/// Everything a pipeline produced, minus timestamps, so replays compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub case_id: String,
    pub pipeline: PipelineKind,
    pub model_id: String,
    pub backend: String,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detected_goals: Option<Vec<GoalItem>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detected_conflicts: Option<ConflictSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<MdtAssignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolutions: Option<Vec<Resolution>>,
    pub original_plan: Prescription,
    pub revised_plan: Prescription,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_rationale: Option<String>,
    /// Transcript file name relative to the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    pub exchange_count: usize,
    pub request_digests: Vec<String>,
    /// Template digest per stage.
    pub prompt_digests: BTreeMap<String, String>,
    #[serde(default)]
    pub warnings: Vec<RunWarning>,
}

impl RunRecord {
    /// Checks the pipeline-shape invariants.
    pub fn validate(&self) -> Result<(), String> {
        match self.pipeline {
            PipelineKind::Pure => {
                if self.detected_conflicts.is_some() || self.assignment.is_some() || self.resolutions.is_some() {
                    return Err("pure runs carry no conflicts, assignment or resolutions".into());
                }
            }
            PipelineKind::SingleAgent => {
                if self.assignment.is_some() || self.resolutions.is_some() {
                    return Err("single-agent runs carry no assignment or resolutions".into());
                }
            }
            PipelineKind::MultiAgent => {
                let detected = self.detected_conflicts.as_ref().map(|c| c.ids()).unwrap_or_default();
                let resolved: std::collections::BTreeSet<String> =
                    self.resolutions.iter().flatten().map(|r| r.conflict_id.clone()).collect();
                if detected != resolved || self.resolutions.as_ref().map_or(0, Vec::len) != detected.len() {
                    return Err("multi-agent runs carry exactly one resolution per detected conflict".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error("stage `{tag}`: {source}")]
    Gateway {
        tag: String,
        #[source]
        source: GatewayError,
    },
    #[error("stage `{tag}`: reply unusable after one repair attempt: {source}")]
    ParseFailure {
        tag: String,
        #[source]
        source: RoleError,
    },
    #[error(transparent)]
    Template(RoleError),
    #[error("exchange budget of {budget} exhausted before `{tag}`")]
    BudgetExceeded { budget: usize, tag: String },
    #[error("no specialty was proposed for conflict `{conflict_id}`")]
    EmptyAssignment { conflict_id: String },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
}

impl WorkflowError {
    /// Request tag of the failing stage, when the error came from an exchange.
    pub fn tag(&self) -> Option<&str> {
        match self {
            WorkflowError::Gateway { tag, .. }
            | WorkflowError::ParseFailure { tag, .. }
            | WorkflowError::BudgetExceeded { tag, .. } => Some(tag),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_names() {
        for kind in PipelineKind::ALL {
            assert_eq!(kind.short().parse::<PipelineKind>().unwrap(), kind);
            assert_eq!(kind.as_str().parse::<PipelineKind>().unwrap(), kind);
        }
        assert!("debate".parse::<PipelineKind>().is_err());
    }

    #[test]
    fn config_defaults() {
        let c = RunConfig::new(PipelineKind::MultiAgent, "m");
        assert_eq!(c.forum.max_rounds, 5);
        assert_eq!(c.max_specialties_per_conflict, 3);
        assert_eq!(c.exchange_budget, 60);
        assert_eq!(c.sampling.temperature, 0.6);
        assert!(c.validate().is_ok());
        let zero = RunConfig { forum: ForumConfig { max_rounds: 0, ..c.forum }, ..c };
        assert!(zero.validate().is_err());
    }
}

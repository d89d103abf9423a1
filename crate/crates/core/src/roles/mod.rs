//! Agent roles, prompt templates and the reply protocol.
//!
//! Every stage of a pipeline renders one [`PromptTemplate`] and expects the
//! agent to finish its reply with a single fenced JSON block of the stage's
//! schema. [`parse_block`] extracts and validates that block; consensus in a
//! discussion forum is read from the explicit `stance` field of each
//! [`SpecialistStatement`].

mod consensus;
mod context;
mod schema;
mod template;

pub use consensus::{detect_consensus, normalize_proposal, ConsensusOutcome, NormalizedAction, SpecialistStatement};
pub use context::{
    format_conflict, format_conflicts, format_goals, format_plan, format_recommendations, patient_summary,
};
pub use schema::{
    parse_block, parse_value, render_block, AssignmentItem, Block, ConflictItem, ConflictsBlock, GoalItem, GoalsBlock,
    MdtBlock, PlanBlock, PlanItem, ProposedAction, ResolutionBlock, Shape, Stance, StatementBlock,
};
pub use template::{render_prompt, Context, PromptTemplate, TemplateSet};

use serde::{Deserialize, Serialize};

use crate::case::normalize_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleKind {
    Gp,
    Specialist,
    Mediator,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentRole {
    pub role_kind: RoleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specialty: Option<String>,
    pub agent_id: String,
}

impl AgentRole {
    pub fn gp() -> Self {
        AgentRole { role_kind: RoleKind::Gp, specialty: None, agent_id: "gp".into() }
    }

    pub fn mediator() -> Self {
        AgentRole { role_kind: RoleKind::Mediator, specialty: None, agent_id: "mediator".into() }
    }

    /// Specialists are identified by their normalized specialty, so two
    /// conflicts needing cardiology share one cardiology agent.
    pub fn specialist(specialty: &str) -> Self {
        let specialty = normalize_text(specialty);
        AgentRole {
            role_kind: RoleKind::Specialist,
            agent_id: format!("specialist:{specialty}"),
            specialty: Some(specialty),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match (self.role_kind, &self.specialty) {
            (RoleKind::Specialist, Some(s)) if !s.trim().is_empty() => Ok(()),
            (RoleKind::Specialist, _) => Err(format!("specialist `{}` has no specialty", self.agent_id)),
            (_, Some(_)) => Err(format!("only specialists carry a specialty (`{}`)", self.agent_id)),
            (_, None) => Ok(()),
        }
    }

    /// System message establishing the persona.
    pub fn persona(&self) -> String {
        match self.role_kind {
            RoleKind::Gp => "You are an experienced general practitioner (GP) responsible for the overall care \
                             of patients with multiple chronic conditions. You review their medication plans, \
                             detect treatment conflicts and consult specialists when a problem lies outside \
                             your expertise."
                .into(),
            RoleKind::Specialist => format!(
                "You are a consultant specialist in {}. You advise on treatment conflicts that touch your \
                 specialty and argue for the safest effective option.",
                self.specialty.as_deref().unwrap_or("medicine")
            ),
            RoleKind::Mediator => "You are a neutral clinical mediator. You weigh the specialists' arguments \
                                   fairly and issue a single, actionable recommendation."
                .into(),
        }
    }
}

/// Pipeline stages; each renders one template and expects one reply schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PurePlan,
    GoalIdentification,
    ConflictDetection,
    MdtFormation,
    SpecialistStatement,
    MediatorSummary,
    DirectResolution,
    Integration,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::PurePlan,
        Stage::GoalIdentification,
        Stage::ConflictDetection,
        Stage::MdtFormation,
        Stage::SpecialistStatement,
        Stage::MediatorSummary,
        Stage::DirectResolution,
        Stage::Integration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::PurePlan => "pure_plan",
            Stage::GoalIdentification => "goal_identification",
            Stage::ConflictDetection => "conflict_detection",
            Stage::MdtFormation => "mdt_formation",
            Stage::SpecialistStatement => "specialist_statement",
            Stage::MediatorSummary => "mediator_summary",
            Stage::DirectResolution => "direct_resolution",
            Stage::Integration => "integration",
        }
    }

    pub fn parse(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.as_str() == name)
    }

    pub fn schema_id(self) -> &'static str {
        match self {
            Stage::PurePlan | Stage::Integration => PlanBlock::SCHEMA_ID,
            Stage::GoalIdentification => GoalsBlock::SCHEMA_ID,
            Stage::ConflictDetection => ConflictsBlock::SCHEMA_ID,
            Stage::MdtFormation => MdtBlock::SCHEMA_ID,
            Stage::SpecialistStatement => StatementBlock::SCHEMA_ID,
            Stage::MediatorSummary | Stage::DirectResolution => ResolutionBlock::SCHEMA_ID,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoleError {
    #[error("template `{stage}` uses placeholder `{{{{{name}}}}}` but the context does not bind it")]
    UnboundPlaceholder { stage: Stage, name: String },
    #[error("template error: {0}")]
    Template(String),
    #[error("reply contains no fenced block (expected {schema_id})")]
    NoBlockFound { schema_id: String },
    #[error("reply block does not match {schema_id}: {}", failures.join("; "))]
    SchemaMismatch { schema_id: String, failures: Vec<String> },
    #[error("unknown schema `{0}`")]
    UnknownSchema(String),
    #[error("statements span several rounds: {rounds:?}")]
    MixedRounds { rounds: Vec<u32> },
}

/// Follow-up user message asking the agent to fix an unparseable reply.
pub fn repair_instruction(error: &RoleError, schema_id: &str) -> String {
    let shape = schema::shape_for(schema_id).map(|s| s.describe()).unwrap_or_default();
    format!(
        "Your previous reply could not be processed: {error}.\n\
         Reply again and end with exactly one fenced ```json block conforming to schema {schema_id}:\n{shape}"
    )
}

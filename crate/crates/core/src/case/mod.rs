//! Patient cases, prescriptions, conflicts and gold standards.
//!
//! Everything here is immutable once loaded. Loaders validate the documented
//! invariants and normalize free-text identifiers so that later stages can
//! compare drugs and conditions by canonical id.

mod conflict;
mod gold;
mod lexicon;
mod load;
mod plan;

pub use conflict::{count_conflicts, Conflict, ConflictCount, ConflictKey, ConflictKind, ConflictMembers, ConflictSet};
pub use gold::{GoldAction, GoldStandard, OptionSet};
pub use lexicon::{normalize_drug, ConflictLexicon, DrugPair};
pub(crate) use load::read_document;
pub use load::{load_case, load_gold, load_lexicon, write_json_pretty, DocumentError};
pub use plan::{diff_plans, Medication, MedicationAction, PlanDelta, Prescription};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Lowercases, trims and collapses internal whitespace runs.
pub fn normalize_text(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub condition_id: String,
    pub name: String,
    /// Filled from `name` when absent in the document.
    #[serde(default)]
    pub canonical: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabResult {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalGoal {
    pub goal_id: String,
    pub description: String,
    /// Canonical ids of medications in the initial plan serving this goal.
    #[serde(default)]
    pub addressed_by: Vec<String>,
}

/// A benchmark patient: the clinical picture and the prescription under review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientCase {
    pub schema_version: u32,
    pub case_id: String,
    #[serde(default)]
    pub title: String,
    pub demographics: String,
    pub conditions: Vec<Condition>,
    pub chief_complaint: String,
    pub history: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical_findings: Option<String>,
    #[serde(default)]
    pub labs: Vec<LabResult>,
    pub initial_plan: Prescription,
    pub goals: Vec<ClinicalGoal>,
    /// Free-form notes on how the case was encoded from its source narrative.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance_notes: Vec<String>,
}

impl PatientCase {
    /// Applies text normalization to conditions, medications and goal links.
    pub fn normalize(&mut self) {
        for condition in &mut self.conditions {
            let source = if condition.canonical.trim().is_empty() { &condition.name } else { &condition.canonical };
            condition.canonical = normalize_text(source);
        }
        self.initial_plan.normalize();
        for goal in &mut self.goals {
            for med in &mut goal.addressed_by {
                *med = normalize_text(med);
            }
        }
    }

    /// Maps medication names and goal links through the lexicon's synonyms.
    pub fn canonicalize(&mut self, lexicon: &ConflictLexicon) {
        self.initial_plan.canonicalize(lexicon);
        for goal in &mut self.goals {
            for med in &mut goal.addressed_by {
                *med = normalize_drug(med, lexicon).0;
            }
        }
    }

    /// Checks the case invariants, returning the first violated rule.
    pub fn validate(&self) -> Result<(), String> {
        if self.case_id.trim().is_empty() {
            return Err("case_id must be non-empty".into());
        }
        if self.conditions.is_empty() {
            return Err("conditions must be non-empty".into());
        }
        if self.goals.is_empty() {
            return Err("goals must be non-empty".into());
        }
        let mut seen = BTreeSet::new();
        for condition in &self.conditions {
            if !seen.insert(condition.condition_id.as_str()) {
                return Err(format!("duplicate condition_id `{}`", condition.condition_id));
            }
        }
        let mut seen = BTreeSet::new();
        for goal in &self.goals {
            if !seen.insert(goal.goal_id.as_str()) {
                return Err(format!("duplicate goal_id `{}`", goal.goal_id));
            }
        }
        self.initial_plan.validate()
    }

    pub fn condition_ids(&self) -> BTreeSet<String> {
        self.conditions.iter().map(|c| c.canonical.clone()).collect()
    }

    /// Resolves free text naming a condition (id, name or canonical form).
    pub fn resolve_condition(&self, text: &str) -> Option<&Condition> {
        let wanted = normalize_text(text);
        self.conditions.iter().find(|c| {
            c.canonical == wanted || normalize_text(&c.condition_id) == wanted || normalize_text(&c.name) == wanted
        })
    }
}

use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

use super::schema::block_instruction;
use super::{RoleError, Stage};

/// Named values bound into a template.
pub type Context = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub stage: Stage,
    pub body: String,
    pub schema_id: &'static str,
}

impl PromptTemplate {
    pub fn new(stage: Stage, body: impl Into<String>) -> Self {
        PromptTemplate { stage, body: body.into(), schema_id: stage.schema_id() }
    }

    /// Hex SHA-256 of the body, stored with runs to pin the prompt text used.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.body.as_bytes()))
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else { break };
            let name = after[..end].trim().to_string();
            if !names.contains(&name) {
                names.push(name);
            }
            rest = &after[end + 2..];
        }
        names
    }
}

/// Substitutes `{{name}}` placeholders and appends the reply-block instruction.
pub fn render_prompt(template: &PromptTemplate, context: &Context) -> Result<String, RoleError> {
    let mut out = String::with_capacity(template.body.len() + 512);
    let mut rest = template.body.as_str();
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            return Err(RoleError::Template(format!("unterminated placeholder in `{}`", template.stage)));
        };
        let name = after[..end].trim();
        let value = context
            .get(name)
            .ok_or_else(|| RoleError::UnboundPlaceholder { stage: template.stage, name: name.to_string() })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    let trimmed = out.trim_end().len();
    out.truncate(trimmed);
    out.push_str("\n\n");
    out.push_str(&block_instruction(template.schema_id));
    Ok(out)
}

const BUILTIN: [(Stage, &str); 8] = [
    (Stage::PurePlan, include_str!("../../templates/pure_plan.txt")),
    (Stage::GoalIdentification, include_str!("../../templates/goal_identification.txt")),
    (Stage::ConflictDetection, include_str!("../../templates/conflict_detection.txt")),
    (Stage::MdtFormation, include_str!("../../templates/mdt_formation.txt")),
    (Stage::SpecialistStatement, include_str!("../../templates/specialist_statement.txt")),
    (Stage::MediatorSummary, include_str!("../../templates/mediator_summary.txt")),
    (Stage::DirectResolution, include_str!("../../templates/direct_resolution.txt")),
    (Stage::Integration, include_str!("../../templates/integration.txt")),
];

/// One template per stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<Stage, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet {
            templates: BUILTIN.iter().map(|(stage, body)| (*stage, PromptTemplate::new(*stage, *body))).collect(),
        }
    }

    /// Built-in templates overridden by any `<stage>.txt` found in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, RoleError> {
        let mut set = Self::builtin();
        let entries = std::fs::read_dir(dir).map_err(|e| RoleError::Template(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| RoleError::Template(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let stage = Stage::parse(name)
                .ok_or_else(|| RoleError::Template(format!("{}: no stage named `{name}`", path.display())))?;
            let body =
                std::fs::read_to_string(&path).map_err(|e| RoleError::Template(format!("{}: {e}", path.display())))?;
            set.templates.insert(stage, PromptTemplate::new(stage, body));
        }
        Ok(set)
    }

    pub fn get(&self, stage: Stage) -> &PromptTemplate {
        &self.templates[&stage]
    }

    pub fn render(&self, stage: Stage, context: &Context) -> Result<String, RoleError> {
        render_prompt(self.get(stage), context)
    }

    /// Digest of every stage's template, keyed by stage name.
    pub fn digests(&self) -> BTreeMap<String, String> {
        self.templates.values().map(|t| (t.stage.as_str().to_string(), t.digest())).collect()
    }
}

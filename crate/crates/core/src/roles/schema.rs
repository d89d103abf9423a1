//! Reply block schemas and the tolerant block reader.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeSet;

use super::RoleError;
use crate::case::{normalize_text, MedicationAction};

const ACTIONS: &[&str] = &["start", "continue", "stop", "replace", "adjust", "bridge"];

/// Structural description of a reply block, used both to validate replies
/// and to tell the agent what to emit.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Any string, possibly empty.
    Str,
    /// A string with at least one non-whitespace character.
    Text,
    Bool,
    Int {
        min: i64,
        max: i64,
    },
    OneOf(&'static [&'static str]),
    List(Box<Shape>),
    Object(Vec<Field>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: &'static str,
    pub required: bool,
    pub shape: Shape,
}

fn req(name: &'static str, shape: Shape) -> Field {
    Field { name, required: true, shape }
}

fn opt(name: &'static str, shape: Shape) -> Field {
    Field { name, required: false, shape }
}

fn list(shape: Shape) -> Shape {
    Shape::List(Box::new(shape))
}

impl Shape {
    /// Collects every mismatch below `path`; unknown object keys are ignored.
    pub fn check(&self, value: &Value, path: &str, failures: &mut Vec<String>) {
        let here = if path.is_empty() { "$" } else { path };
        match (self, value) {
            (Shape::Str, Value::String(_)) | (Shape::Bool, Value::Bool(_)) => {}
            (Shape::Text, Value::String(s)) if !s.trim().is_empty() => {}
            (Shape::Text, Value::String(_)) => failures.push(format!("{here}: must be non-empty")),
            (Shape::Int { min, max }, Value::Number(n)) => match n.as_i64() {
                Some(i) if (*min..=*max).contains(&i) => {}
                _ => failures.push(format!("{here}: expected an integer in {min}..={max}")),
            },
            (Shape::OneOf(options), Value::String(s)) if options.contains(&normalize_text(s).as_str()) => {}
            (Shape::OneOf(options), _) => failures.push(format!("{here}: expected one of {}", options.join("|"))),
            (Shape::List(item), Value::Array(items)) => {
                for (i, v) in items.iter().enumerate() {
                    item.check(v, &format!("{here}[{i}]"), failures);
                }
            }
            (Shape::Object(fields), Value::Object(map)) => {
                for field in fields {
                    let child = format!("{here}.{}", field.name);
                    match map.get(field.name) {
                        None | Some(Value::Null) if field.required => failures.push(format!("{child}: missing")),
                        None | Some(Value::Null) => {}
                        Some(v) => field.shape.check(v, &child, failures),
                    }
                }
            }
            _ => failures.push(format!("{here}: expected {}", self.kind_name())),
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Shape::Str | Shape::Text => "a string",
            Shape::Bool => "a boolean",
            Shape::Int { .. } => "an integer",
            Shape::OneOf(_) => "an enumerated string",
            Shape::List(_) => "an array",
            Shape::Object(_) => "an object",
        }
    }

    /// Compact skeleton shown to agents, e.g. `{"drug": string, "dose"?: string}`.
    pub fn describe(&self) -> String {
        match self {
            Shape::Str | Shape::Text => "string".into(),
            Shape::Bool => "true | false".into(),
            Shape::Int { min, max } => format!("integer {min}..{max}"),
            Shape::OneOf(options) => options.iter().map(|o| format!("\"{o}\"")).collect::<Vec<_>>().join(" | "),
            Shape::List(item) => format!("[{}, ...]", item.describe()),
            Shape::Object(fields) => {
                let inner: Vec<String> = fields
                    .iter()
                    .map(|f| format!("\"{}\"{}: {}", f.name, if f.required { "" } else { "?" }, f.shape.describe()))
                    .collect();
                format!("{{{}}}", inner.join(", "))
            }
        }
    }
}

/// A typed reply block with a schema id, a structural shape and optional
/// cross-field rules.
pub trait Block: Serialize + DeserializeOwned {
    const SCHEMA_ID: &'static str;
    fn shape() -> Shape;

    /// Rules the shape cannot express. Each entry names a failing field.
    fn rules(&self) -> Vec<String> {
        Vec::new()
    }
}

pub(crate) fn shape_for(schema_id: &str) -> Option<Shape> {
    Some(match schema_id {
        PlanBlock::SCHEMA_ID => PlanBlock::shape(),
        GoalsBlock::SCHEMA_ID => GoalsBlock::shape(),
        ConflictsBlock::SCHEMA_ID => ConflictsBlock::shape(),
        MdtBlock::SCHEMA_ID => MdtBlock::shape(),
        StatementBlock::SCHEMA_ID => StatementBlock::shape(),
        ResolutionBlock::SCHEMA_ID => ResolutionBlock::shape(),
        _ => return None,
    })
}

/// Instruction appended to every rendered prompt.
pub(crate) fn block_instruction(schema_id: &str) -> String {
    let shape = shape_for(schema_id).map(|s| s.describe()).unwrap_or_else(|| "{}".into());
    format!(
        "End your reply with exactly one fenced ```json block conforming to schema {schema_id}:\n{shape}\n\
         Fields marked with ? are optional. Medication actions are one of: {}.",
        ACTIONS.join(", ")
    )
}

/// Body of the last complete fenced block in `reply`, if any.
fn last_fenced_block(reply: &str) -> Option<&str> {
    let mut fences = Vec::new();
    let mut offset = 0;
    for line in reply.split_inclusive('\n') {
        if line.trim_start().starts_with("```") {
            fences.push((offset, offset + line.len()));
        }
        offset += line.len();
    }
    let pairs = fences.len() / 2;
    if pairs == 0 {
        return None;
    }
    let (_, body_start) = fences[2 * pairs - 2];
    let (body_end, _) = fences[2 * pairs - 1];
    Some(&reply[body_start..body_end])
}

/// Extracts the last fenced block and validates it against `schema_id`.
pub fn parse_value(reply: &str, schema_id: &str) -> Result<Value, RoleError> {
    let shape = shape_for(schema_id).ok_or_else(|| RoleError::UnknownSchema(schema_id.into()))?;
    let body = last_fenced_block(reply).ok_or_else(|| RoleError::NoBlockFound { schema_id: schema_id.into() })?;
    let value: Value = serde_json::from_str(body).map_err(|e| RoleError::SchemaMismatch {
        schema_id: schema_id.into(),
        failures: vec![format!("$: not valid JSON ({e})")],
    })?;
    let mut failures = Vec::new();
    shape.check(&value, "", &mut failures);
    if failures.is_empty() {
        Ok(value)
    } else {
        Err(RoleError::SchemaMismatch { schema_id: schema_id.into(), failures })
    }
}

/// Typed form of [`parse_value`], also applying the block's cross-field rules.
pub fn parse_block<B: Block>(reply: &str) -> Result<B, RoleError> {
    let mut value = parse_value(reply, B::SCHEMA_ID)?;
    lowercase_enums(&mut value);
    let block: B = serde_json::from_value(value)
        .map_err(|e| RoleError::SchemaMismatch { schema_id: B::SCHEMA_ID.into(), failures: vec![e.to_string()] })?;
    let failures = block.rules();
    if failures.is_empty() {
        Ok(block)
    } else {
        Err(RoleError::SchemaMismatch { schema_id: B::SCHEMA_ID.into(), failures })
    }
}

/// Serializes a block the way agents are asked to emit it.
pub fn render_block<B: Block>(block: &B) -> String {
    let json = serde_json::to_string_pretty(block).expect("blocks always serialize");
    format!("```json\n{json}\n```")
}

fn action_shape() -> Shape {
    Shape::OneOf(ACTIONS)
}

fn non_blank(s: &Option<String>) -> bool {
    s.as_deref().is_some_and(|s| !s.trim().is_empty())
}

/// Enumerated strings are matched case-insensitively by the validator; serde
/// needs the lowercase form.
fn lowercase_enums(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for (key, v) in map.iter_mut() {
                if key == "action" || key == "stance" || key == "kind" {
                    if let Value::String(s) = v {
                        *s = normalize_text(s);
                    }
                } else {
                    lowercase_enums(v);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(lowercase_enums),
        _ => {}
    }
}

// ---- plan.v1 -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanItem {
    pub drug: String,
    pub action: MedicationAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dose: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanBlock {
    pub medications: Vec<PlanItem>,
    #[serde(default)]
    pub monitoring: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

impl Block for PlanBlock {
    const SCHEMA_ID: &'static str = "plan.v1";

    fn shape() -> Shape {
        Shape::Object(vec![
            req(
                "medications",
                list(Shape::Object(vec![
                    req("drug", Shape::Text),
                    req("action", action_shape()),
                    opt("dose", Shape::Str),
                    opt("frequency", Shape::Str),
                    opt("rationale", Shape::Str),
                    opt("timing", Shape::Str),
                ])),
            ),
            opt("monitoring", list(Shape::Str)),
            opt("rationale", Shape::Str),
        ])
    }

    fn rules(&self) -> Vec<String> {
        let mut failures = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, item) in self.medications.iter().enumerate() {
            if !seen.insert(normalize_text(&item.drug)) {
                failures.push(format!("$.medications[{i}].drug: `{}` listed twice", item.drug));
            }
            if item.action == MedicationAction::Replace && !non_blank(&item.rationale) && !non_blank(&item.timing) {
                failures.push(format!(
                    "$.medications[{i}].rationale: a replacement must name what it replaces in rationale or timing"
                ));
            }
        }
        failures
    }
}

// ---- goals.v1 ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalItem {
    pub description: String,
    #[serde(default)]
    pub medications: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalsBlock {
    pub goals: Vec<GoalItem>,
}

impl Block for GoalsBlock {
    const SCHEMA_ID: &'static str = "goals.v1";

    fn shape() -> Shape {
        Shape::Object(vec![req(
            "goals",
            list(Shape::Object(vec![req("description", Shape::Text), opt("medications", list(Shape::Text))])),
        )])
    }
}

// ---- conflicts.v1 --------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictItem {
    /// `ddi` or `contraindication`.
    pub kind: String,
    pub drugs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<String>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictsBlock {
    pub conflicts: Vec<ConflictItem>,
}

impl Block for ConflictsBlock {
    const SCHEMA_ID: &'static str = "conflicts.v1";

    fn shape() -> Shape {
        Shape::Object(vec![req(
            "conflicts",
            list(Shape::Object(vec![
                req("kind", Shape::OneOf(&["ddi", "contraindication"])),
                req("drugs", list(Shape::Text)),
                opt("condition", Shape::Text),
                opt("severity", Shape::Str),
                req("description", Shape::Str),
            ])),
        )])
    }

    fn rules(&self) -> Vec<String> {
        let mut failures = Vec::new();
        for (i, c) in self.conflicts.iter().enumerate() {
            match c.kind.as_str() {
                "ddi" => {
                    let distinct: BTreeSet<String> = c.drugs.iter().map(|d| normalize_text(d)).collect();
                    if c.drugs.len() != 2 || distinct.len() != 2 {
                        failures.push(format!("$.conflicts[{i}].drugs: a ddi names exactly two distinct drugs"));
                    }
                }
                _ => {
                    if c.drugs.len() != 1 {
                        failures.push(format!("$.conflicts[{i}].drugs: a contraindication names exactly one drug"));
                    }
                    if !non_blank(&c.condition) {
                        failures.push(format!("$.conflicts[{i}].condition: required for a contraindication"));
                    }
                }
            }
        }
        failures
    }
}

// ---- mdt.v1 --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentItem {
    pub conflict_id: String,
    pub convene_mdt: bool,
    #[serde(default)]
    pub specialties: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdtBlock {
    pub assignments: Vec<AssignmentItem>,
}

impl Block for MdtBlock {
    const SCHEMA_ID: &'static str = "mdt.v1";

    fn shape() -> Shape {
        Shape::Object(vec![req(
            "assignments",
            list(Shape::Object(vec![
                req("conflict_id", Shape::Text),
                req("convene_mdt", Shape::Bool),
                opt("specialties", list(Shape::Text)),
                opt("reason", Shape::Str),
            ])),
        )])
    }
}

// ---- statement.v1 and resolution.v1 --------------------------------------

/// One medication action proposed by a specialist, mediator or direct resolver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposedAction {
    pub action: MedicationAction,
    pub drug: String,
    /// Drug taking the place of `drug` for `replace`; bridged drug for `bridge`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ProposedAction {
    pub fn new(action: MedicationAction, drug: impl Into<String>) -> Self {
        ProposedAction { action, drug: drug.into(), replacement: None, detail: None }
    }

    pub fn replacing(drug: impl Into<String>, replacement: impl Into<String>) -> Self {
        ProposedAction { replacement: Some(replacement.into()), ..ProposedAction::new(MedicationAction::Replace, drug) }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    /// Human-readable one-liner, e.g. `replace aspirin with clopidogrel`.
    pub fn describe(&self) -> String {
        let mut text = match (&self.action, &self.replacement) {
            (MedicationAction::Replace, Some(r)) => format!("replace {} with {r}", self.drug),
            (MedicationAction::Bridge, Some(r)) => format!("bridge {} with {r}", self.drug),
            (action, _) => format!("{} {}", action.as_str(), self.drug),
        };
        if let Some(detail) = self.detail.as_deref().filter(|d| !d.trim().is_empty()) {
            text.push_str(&format!(" ({detail})"));
        }
        text
    }
}

fn proposed_action_shape() -> Shape {
    Shape::Object(vec![
        req("action", action_shape()),
        req("drug", Shape::Text),
        opt("replacement", Shape::Text),
        opt("detail", Shape::Str),
    ])
}

fn replacement_rules(actions: &[ProposedAction], path: &str) -> Vec<String> {
    actions
        .iter()
        .enumerate()
        .filter(|(_, a)| a.action == MedicationAction::Replace && !non_blank(&a.replacement))
        .map(|(i, _)| format!("{path}[{i}].replacement: required for replace"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Agree,
    Revise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementBlock {
    pub position: String,
    pub stance: Stance,
    pub proposal: Vec<ProposedAction>,
}

impl Block for StatementBlock {
    const SCHEMA_ID: &'static str = "statement.v1";

    fn shape() -> Shape {
        Shape::Object(vec![
            req("position", Shape::Text),
            req("stance", Shape::OneOf(&["agree", "revise"])),
            req("proposal", list(proposed_action_shape())),
        ])
    }

    fn rules(&self) -> Vec<String> {
        let mut failures = replacement_rules(&self.proposal, "$.proposal");
        if self.stance == Stance::Agree && self.proposal.is_empty() {
            failures.push("$.proposal: an agreeing statement must restate the proposal it agrees to".into());
        }
        failures
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionBlock {
    pub recommendation: Vec<ProposedAction>,
    pub rationale: String,
}

impl Block for ResolutionBlock {
    const SCHEMA_ID: &'static str = "resolution.v1";

    fn shape() -> Shape {
        Shape::Object(vec![req("recommendation", list(proposed_action_shape())), req("rationale", Shape::Text)])
    }

    fn rules(&self) -> Vec<String> {
        replacement_rules(&self.recommendation, "$.recommendation")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fenced(json: &str) -> String {
        format!("Some reasoning first.\n\n```json\n{json}\n```\n")
    }

    #[test]
    fn two_conflicts_parse_and_match_the_standalone_validator() {
        let json = r#"{"conflicts": [
            {"kind": "contraindication", "drugs": ["aspirin"], "condition": "duodenal ulcer", "description": "bleeding"},
            {"kind": "DDI", "drugs": ["warfarin", "Bactrim"], "description": "INR rise"}
        ]}"#;
        let block: ConflictsBlock = parse_block(&fenced(json)).unwrap();
        assert_eq!(block.conflicts.len(), 2);
        assert_eq!(block.conflicts[1].kind, "ddi");

        let mut failures = Vec::new();
        ConflictsBlock::shape().check(&serde_json::from_str(json).unwrap(), "", &mut failures);
        assert!(failures.is_empty());
    }

    #[test]
    fn prose_only_reply_has_no_block() {
        let err = parse_block::<PlanBlock>("I would stop the aspirin.").unwrap_err();
        assert_eq!(err, RoleError::NoBlockFound { schema_id: "plan.v1".into() });
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let json = r#"{"position": "ok", "stance": "revise", "proposal": [], "confidence": 0.9,
                       "extra": {"nested": true}}"#;
        let block: StatementBlock = parse_block(&fenced(json)).unwrap();
        assert_eq!(block.stance, Stance::Revise);
    }

    #[test]
    fn last_block_wins() {
        let reply = format!(
            "{}\nOn reflection:\n{}",
            fenced(r#"{"goals": []}"#),
            fenced(r#"{"goals": [{"description": "prevent stroke", "medications": ["aspirin"]}]}"#,)
        );
        let block: GoalsBlock = parse_block(&reply).unwrap();
        assert_eq!(block.goals.len(), 1);
    }

    #[test]
    fn mismatch_lists_every_failing_field() {
        let json = r#"{"medications": [{"drug": "", "action": "pause"}, {"action": "stop"}]}"#;
        match parse_block::<PlanBlock>(&fenced(json)).unwrap_err() {
            RoleError::SchemaMismatch { failures, .. } => {
                assert_eq!(
                    failures,
                    vec![
                        "$.medications[0].drug: must be non-empty",
                        "$.medications[0].action: expected one of start|continue|stop|replace|adjust|bridge",
                        "$.medications[1].drug: missing",
                    ]
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cross_field_rules() {
        let agree_empty = r#"{"position": "fine", "stance": "agree", "proposal": []}"#;
        assert!(matches!(parse_block::<StatementBlock>(&fenced(agree_empty)), Err(RoleError::SchemaMismatch { .. })));
        let self_ddi = r#"{"conflicts": [{"kind": "ddi", "drugs": ["a", "A"], "description": ""}]}"#;
        assert!(matches!(parse_block::<ConflictsBlock>(&fenced(self_ddi)), Err(RoleError::SchemaMismatch { .. })));
        let bare_replace = r#"{"recommendation": [{"action": "replace", "drug": "aspirin"}], "rationale": "x"}"#;
        assert!(matches!(parse_block::<ResolutionBlock>(&fenced(bare_replace)), Err(RoleError::SchemaMismatch { .. })));
        let dup = r#"{"medications": [{"drug": "PPI", "action": "continue"}, {"drug": "ppi", "action": "stop"}]}"#;
        assert!(matches!(parse_block::<PlanBlock>(&fenced(dup)), Err(RoleError::SchemaMismatch { .. })));
    }

    #[test]
    fn invalid_json_is_a_mismatch() {
        assert!(matches!(parse_value(&fenced("{not json"), "plan.v1"), Err(RoleError::SchemaMismatch { .. })));
        assert!(matches!(parse_value("x", "nope.v9"), Err(RoleError::UnknownSchema(_))));
    }

    #[test]
    fn unterminated_fence_is_ignored() {
        let reply = format!("{}\n```json\n{{\"goals\": [", fenced(r#"{"goals": []}"#));
        let block: GoalsBlock = parse_block(&reply).unwrap();
        assert!(block.goals.is_empty());
    }

    fn text() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9 /-]{0,15}[a-z0-9]"
    }

    fn medication_action() -> impl Strategy<Value = MedicationAction> {
        prop_oneof![
            Just(MedicationAction::Start),
            Just(MedicationAction::Continue),
            Just(MedicationAction::Stop),
            Just(MedicationAction::Adjust),
            Just(MedicationAction::Bridge),
        ]
    }

    fn proposed() -> impl Strategy<Value = ProposedAction> {
        prop_oneof![
            (medication_action(), text(), proptest::option::of(text())).prop_map(|(a, d, detail)| ProposedAction {
                action: a,
                drug: d,
                replacement: None,
                detail
            }),
            (text(), text()).prop_map(|(d, r)| ProposedAction::replacing(d, r)),
        ]
    }

    proptest! {
        #[test]
        fn statement_round_trip(position in text(), proposal in proptest::collection::vec(proposed(), 1..5), agree: bool) {
            let block = StatementBlock {
                position,
                stance: if agree { Stance::Agree } else { Stance::Revise },
                proposal,
            };
            prop_assert_eq!(parse_block::<StatementBlock>(&render_block(&block)).unwrap(), block);
        }

        #[test]
        fn resolution_round_trip(recommendation in proptest::collection::vec(proposed(), 0..5), rationale in text()) {
            let block = ResolutionBlock { recommendation, rationale };
            prop_assert_eq!(parse_block::<ResolutionBlock>(&render_block(&block)).unwrap(), block);
        }

        #[test]
        fn plan_round_trip(drugs in proptest::collection::btree_set(text(), 0..6), monitoring in proptest::collection::vec(text(), 0..3)) {
            let block = PlanBlock {
                medications: drugs
                    .into_iter()
                    .map(|drug| PlanItem { drug, action: MedicationAction::Continue, dose: Some("10 mg".into()), frequency: None, rationale: None, timing: None })
                    .collect(),
                monitoring,
                rationale: None,
            };
            // Drugs differing only in case or spacing would be rejected as duplicates.
            prop_assume!(block.rules().is_empty());
            prop_assert_eq!(parse_block::<PlanBlock>(&render_block(&block)).unwrap(), block);
        }

        #[test]
        fn goals_and_mdt_round_trip(descriptions in proptest::collection::vec(text(), 0..4), convene: bool) {
            let goals = GoalsBlock {
                goals: descriptions.iter().map(|d| GoalItem { description: d.clone(), medications: vec![d.clone()] }).collect(),
            };
            prop_assert_eq!(parse_block::<GoalsBlock>(&render_block(&goals)).unwrap(), goals);
            let mdt = MdtBlock {
                assignments: descriptions
                    .iter()
                    .map(|d| AssignmentItem { conflict_id: d.clone(), convene_mdt: convene, specialties: vec![d.clone()], reason: None })
                    .collect(),
            };
            prop_assert_eq!(parse_block::<MdtBlock>(&render_block(&mdt)).unwrap(), mdt);
        }
    }
}

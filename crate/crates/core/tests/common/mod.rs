//! Shared fixtures: a toy case and a tag-aware scripted backend.
#![allow(dead_code)]

use consilium_core::case::{ConflictLexicon, DrugPair, MedicationAction, PatientCase};
use consilium_core::gateway::{ChatRequest, FnBackend, GatewayError};
use consilium_core::roles::{
    render_block, AssignmentItem, ConflictItem, ConflictsBlock, GoalItem, GoalsBlock, MdtBlock, PlanBlock, PlanItem,
    ProposedAction, ResolutionBlock, Stance, StatementBlock,
};

pub const DRUGS: usize = 8;

/// A case whose plan holds `d0..d7`; conflict `k` is the DDI between `d(2k)` and `d(2k+1)`.
pub fn toy_case() -> PatientCase {
    let medications: Vec<serde_json::Value> =
        (0..DRUGS).map(|i| serde_json::json!({"display_name": format!("d{i}"), "action": "continue"})).collect();
    let mut case: PatientCase = serde_json::from_value(serde_json::json!({
        "schema_version": 1,
        "case_id": "toy",
        "demographics": "70-year-old",
        "conditions": [{"condition_id": "htn", "name": "Hypertension"}],
        "chief_complaint": "review",
        "history": "none",
        "initial_plan": {"medications": medications},
        "goals": [{"goal_id": "g1", "description": "control blood pressure"}]
    }))
    .unwrap();
    case.normalize();
    case.validate().unwrap();
    case
}

pub fn toy_lexicon() -> ConflictLexicon {
    let mut lex = ConflictLexicon::empty("toy");
    for k in 0..DRUGS / 2 {
        lex.known_ddis.insert(DrugPair::new(format!("d{}", 2 * k), format!("d{}", 2 * k + 1)).unwrap());
    }
    lex
}

pub fn conflict_id(k: usize) -> String {
    format!("ddi:d{}+d{}", 2 * k, 2 * k + 1)
}

/// How the GP routes one detected conflict and when its forum agrees.
#[derive(Debug, Clone)]
pub struct ConflictScript {
    pub convene: bool,
    pub specialties: Vec<String>,
    /// First round in which all specialists agree; `None` never agrees.
    pub agree_round: Option<u32>,
}

#[derive(Debug, Clone, Default)]
pub struct Scenario {
    pub conflicts: Vec<ConflictScript>,
    /// Extra drug the GP adds during integration.
    pub extra_drug: Option<String>,
}

fn fenced_reply<T: consilium_core::roles::Block>(block: &T) -> String {
    format!("Here is my answer.\n\n{}", render_block(block))
}

fn swap_proposal(k: usize) -> Vec<ProposedAction> {
    vec![ProposedAction::new(MedicationAction::Stop, format!("d{}", 2 * k + 1))]
}

pub fn plan_reply(scenario: &Scenario) -> String {
    let stopped: Vec<usize> = (0..scenario.conflicts.len()).map(|k| 2 * k + 1).collect();
    let mut medications: Vec<PlanItem> = (0..DRUGS)
        .map(|i| PlanItem {
            drug: format!("d{i}"),
            action: if stopped.contains(&i) { MedicationAction::Stop } else { MedicationAction::Continue },
            dose: None,
            frequency: None,
            rationale: None,
            timing: None,
        })
        .collect();
    if let Some(extra) = &scenario.extra_drug {
        medications.push(PlanItem {
            drug: extra.clone(),
            action: MedicationAction::Start,
            dose: None,
            frequency: None,
            rationale: None,
            timing: None,
        });
    }
    fenced_reply(&PlanBlock { medications, monitoring: vec![], rationale: Some("resolved".into()) })
}

/// Answers every pipeline stage from the scenario, keyed by request tag.
pub fn reply_for(scenario: &Scenario, tag: &str) -> Result<String, GatewayError> {
    let parts: Vec<&str> = tag.split('/').collect();
    let index_of = |cid: &str| (0..scenario.conflicts.len()).find(|k| conflict_id(*k) == cid);
    let reply = match parts[0] {
        "pure_plan" | "integration" => plan_reply(scenario),
        "goal_identification" => fenced_reply(&GoalsBlock {
            goals: vec![GoalItem { description: "control blood pressure".into(), medications: vec!["d0".into()] }],
        }),
        "conflict_detection" => fenced_reply(&ConflictsBlock {
            conflicts: (0..scenario.conflicts.len())
                .map(|k| ConflictItem {
                    kind: "ddi".into(),
                    drugs: vec![format!("D{}", 2 * k + 1), format!("d{}", 2 * k)],
                    condition: None,
                    severity: None,
                    description: format!("interaction {k}"),
                })
                .collect(),
        }),
        "mdt_formation" => fenced_reply(&MdtBlock {
            assignments: scenario
                .conflicts
                .iter()
                .enumerate()
                .map(|(k, c)| AssignmentItem {
                    conflict_id: conflict_id(k),
                    convene_mdt: c.convene,
                    specialties: c.specialties.clone(),
                    reason: None,
                })
                .collect(),
        }),
        "specialist_statement" => {
            let k = index_of(parts[1]).expect("known conflict");
            let round: u32 = parts[3].trim_start_matches('r').parse().unwrap();
            let agrees = scenario.conflicts[k].agree_round.is_some_and(|r| round >= r);
            let (stance, proposal) = if agrees {
                (Stance::Agree, swap_proposal(k))
            } else {
                // Disagreeing specialists each push their own proposal.
                (
                    Stance::Revise,
                    vec![ProposedAction::new(MedicationAction::Adjust, format!("d{}", 2 * k))
                        .with_detail(parts[2].to_string())],
                )
            };
            fenced_reply(&StatementBlock { position: format!("{} view in round {round}", parts[2]), stance, proposal })
        }
        "mediator_summary" | "direct_resolution" => {
            let k = index_of(parts[1]).expect("known conflict");
            fenced_reply(&ResolutionBlock { recommendation: swap_proposal(k), rationale: "safer".into() })
        }
        other => panic!("unexpected tag {other}"),
    };
    Ok(reply)
}

pub fn scenario_backend(
    scenario: Scenario,
) -> FnBackend<impl Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync> {
    FnBackend::new(move |req: &ChatRequest| reply_for(&scenario, &req.request_tag))
}

pub fn script(convene: bool, specialties: &[&str], agree_round: Option<u32>) -> ConflictScript {
    ConflictScript { convene, specialties: specialties.iter().map(|s| s.to_string()).collect(), agree_round }
}

mod common;

use common::*;
use consilium_core::case::MedicationAction;
use consilium_core::gateway::{
    read_transcript, ChatBackend, ChatRequest, FnBackend, Gateway, GatewayError, RecordingSession, ReplayBackend,
    ScriptedBackend,
};
use consilium_core::roles::{render_block, AssignmentItem, MdtBlock, TemplateSet};
use consilium_core::workflow::{run_pipeline, PipelineKind, RunConfig, RunRecord, WarningKind, WorkflowError};

fn run(kind: PipelineKind, backend: &dyn ChatBackend) -> Result<RunRecord, WorkflowError> {
    let case = toy_case();
    let lexicon = toy_lexicon();
    let config = RunConfig::new(kind, "test-model");
    let templates = TemplateSet::builtin();
    let mut gateway = Gateway::new(backend);
    run_pipeline("r", &case, &lexicon, &config, &templates, &mut gateway)
}

fn recorded(kind: PipelineKind, scenario: Scenario) -> (RunRecord, Vec<consilium_core::gateway::TranscriptEntry>) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let backend = scenario_backend(scenario);
    let case = toy_case();
    let lexicon = toy_lexicon();
    let config = RunConfig::new(kind, "test-model");
    let templates = TemplateSet::builtin();
    let mut gateway = Gateway::new(&backend).with_recording(RecordingSession::create(&path, "r").unwrap());
    let record = run_pipeline("r", &case, &lexicon, &config, &templates, &mut gateway).unwrap();
    gateway.finish().unwrap();
    let (_, entries) = read_transcript(&path).unwrap();
    (record, entries)
}

#[test]
fn pure_pipeline_is_one_exchange() {
    let (record, entries) = recorded(PipelineKind::Pure, Scenario::default());
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0].request.request_tag, "pure_plan");
    assert_eq!(record.revised_plan.medications.len(), 8);
    assert!(record.detected_conflicts.is_none() && record.assignment.is_none() && record.resolutions.is_none());
    assert_eq!(record.request_digests.len(), 1);
    assert_eq!(entries[0].request.temperature, Some(0.6));
}

#[test]
fn single_agent_runs_staged_exchanges_without_forum() {
    let scenario = Scenario { conflicts: vec![script(true, &["cardiology"], None)], ..Default::default() };
    let (record, entries) = recorded(PipelineKind::SingleAgent, scenario);
    let tags: Vec<&str> = entries.iter().map(|e| e.request.request_tag.as_str()).collect();
    assert_eq!(tags, ["goal_identification", "conflict_detection", "integration"]);
    assert!(entries.iter().all(|e| e.agent_id == "gp"));
    assert_eq!(record.detected_conflicts.unwrap().len(), 1);
    assert!(record.resolutions.is_none());
    let stopped = record.revised_plan.get("d1").unwrap();
    assert_eq!(stopped.action, MedicationAction::Stop);
}

#[test]
fn multi_agent_without_conflicts_convenes_nobody() {
    let (record, entries) = recorded(PipelineKind::MultiAgent, Scenario::default());
    let tags: Vec<&str> = entries.iter().map(|e| e.request.request_tag.as_str()).collect();
    assert_eq!(tags, ["goal_identification", "conflict_detection", "integration"]);
    assert!(record.assignment.unwrap().is_empty());
    assert_eq!(record.resolutions.unwrap().len(), 0);
    // Restating the original plan yields an empty delta.
    let delta = consilium_core::case::diff_plans(&record.original_plan, &record.revised_plan);
    assert!(delta.added.is_empty() && delta.removed.is_empty());
}

#[test]
fn single_specialist_resolves_directly() {
    let scenario = Scenario { conflicts: vec![script(true, &["Cardiology"], None)], ..Default::default() };
    let (record, entries) = recorded(PipelineKind::MultiAgent, scenario);
    let r = &record.resolutions.unwrap()[0];
    assert_eq!((r.rounds_used, r.mediator_invoked, r.gp_resolved), (0, false, false));
    assert_eq!(r.contributing_agents, ["specialist:cardiology"]);
    assert!(entries.iter().any(|e| e.request.request_tag == "direct_resolution/ddi:d0+d1/cardiology"));
    assert_eq!(record.assignment.unwrap().roster.len(), 1);
}

#[test]
fn forum_agreeing_in_round_two_uses_two_rounds() {
    let scenario =
        Scenario { conflicts: vec![script(true, &["cardiology", "nephrology"], Some(2))], ..Default::default() };
    let (record, entries) = recorded(PipelineKind::MultiAgent, scenario);
    let r = &record.resolutions.unwrap()[0];
    assert_eq!((r.rounds_used, r.mediator_invoked), (2, false));
    let rounds: std::collections::BTreeSet<u32> = entries.iter().filter_map(|e| e.round).collect();
    assert_eq!(rounds.into_iter().collect::<Vec<_>>(), [1, 2]);
    assert_eq!(entries.iter().filter(|e| e.round.is_some()).count(), 4);
    assert!(entries.iter().all(|e| e.agent_id != "mediator"));
    assert_eq!(r.history.len(), 4);
}

#[test]
fn exhausted_forum_calls_the_mediator() {
    let scenario =
        Scenario { conflicts: vec![script(true, &["cardiology", "nephrology"], None)], ..Default::default() };
    let (record, entries) = recorded(PipelineKind::MultiAgent, scenario);
    let r = &record.resolutions.unwrap()[0];
    assert_eq!((r.rounds_used, r.mediator_invoked), (5, true));
    assert_eq!(entries.iter().filter(|e| e.round.is_some()).count(), 10);
    let mediator = entries.iter().find(|e| e.agent_id == "mediator").unwrap();
    assert_eq!(mediator.request.request_tag, "mediator_summary/ddi:d0+d1");
    // The mediator sees every specialist's final-round position.
    let prompt = &mediator.request.messages[1].content;
    assert!(prompt.contains("cardiology view in round 5") && prompt.contains("nephrology view in round 5"));
}

#[test]
fn declined_conflicts_are_resolved_by_the_gp() {
    let scenario = Scenario {
        conflicts: vec![script(false, &[], None), script(true, &["cardiology"], None)],
        ..Default::default()
    };
    let (record, entries) = recorded(PipelineKind::MultiAgent, scenario);
    let assignment = record.assignment.unwrap();
    assert_eq!(assignment.gp_resolved, ["ddi:d0+d1"]);
    assert_eq!(assignment.entries.len(), 1);
    let resolutions = record.resolutions.unwrap();
    assert!(resolutions[0].gp_resolved && resolutions[0].contributing_agents == ["gp"]);
    assert!(entries.iter().any(|e| e.request.request_tag == "direct_resolution/ddi:d0+d1/gp"));
}

#[test]
fn shared_specialties_share_one_agent() {
    let scenario = Scenario {
        conflicts: vec![script(true, &["cardiology"], None), script(true, &["Cardiology", "nephrology"], Some(1))],
        ..Default::default()
    };
    let (record, _) = recorded(PipelineKind::MultiAgent, scenario);
    let roster: Vec<String> = record.assignment.unwrap().roster.into_iter().map(|a| a.agent_id).collect();
    assert_eq!(roster, ["specialist:cardiology", "specialist:nephrology"]);
}

#[test]
fn specialty_cap_truncates_and_warns() {
    let scenario =
        Scenario { conflicts: vec![script(true, &["a", "b", "c", "d", "e"], Some(1))], ..Default::default() };
    let (record, _) = recorded(PipelineKind::MultiAgent, scenario);
    assert_eq!(record.assignment.unwrap().entries[0].specialties, ["a", "b", "c"]);
    assert!(record.warnings.iter().any(|w| w.kind == WarningKind::SpecialtyCapApplied));
}

#[test]
fn unsourced_drug_is_flagged_not_fatal() {
    let scenario = Scenario { conflicts: vec![script(true, &["cardiology"], None)], extra_drug: Some("xyzmab".into()) };
    let (record, _) = recorded(PipelineKind::MultiAgent, scenario);
    let flagged: Vec<&str> = record
        .warnings
        .iter()
        .filter(|w| w.kind == WarningKind::ProvenanceViolation)
        .map(|w| w.subject.as_str())
        .collect();
    assert_eq!(flagged, ["xyzmab"]);
}

#[test]
fn one_repair_prompt_then_success() {
    let backend = ScriptedBackend::tagged()
        .reply("pure_plan", "I would keep everything as is.")
        .reply("pure_plan#repair", plan_reply(&Scenario::default()));
    let record = run(PipelineKind::Pure, &backend).unwrap();
    assert_eq!(record.exchange_count, 2);
    assert_eq!(backend.remaining(), 0);
}

#[test]
fn second_parse_failure_is_fatal_with_stage_context() {
    let backend = ScriptedBackend::tagged().reply("pure_plan", "prose").reply("pure_plan#repair", "more prose");
    let err = run(PipelineKind::Pure, &backend).unwrap_err();
    assert!(matches!(err, WorkflowError::ParseFailure { ref tag, .. } if tag == "pure_plan"), "{err}");
}

#[test]
fn missing_specialties_after_repair_is_an_empty_assignment() {
    let scenario = Scenario { conflicts: vec![script(true, &["cardiology"], None)], ..Default::default() };
    let empty = render_block(&MdtBlock {
        assignments: vec![AssignmentItem {
            conflict_id: conflict_id(0),
            convene_mdt: true,
            specialties: vec![],
            reason: None,
        }],
    });
    let backend = FnBackend::new(move |req: &ChatRequest| {
        if req.request_tag.starts_with("mdt_formation") {
            Ok(empty.clone())
        } else {
            reply_for(&scenario, &req.request_tag)
        }
    });
    let err = run(PipelineKind::MultiAgent, &backend).unwrap_err();
    assert!(matches!(err, WorkflowError::EmptyAssignment { ref conflict_id } if conflict_id == "ddi:d0+d1"), "{err}");
}

#[test]
fn exchange_budget_stops_runaway_runs() {
    let scenario = Scenario { conflicts: vec![script(true, &["a", "b", "c"], None); 4], ..Default::default() };
    let backend = scenario_backend(scenario);
    let err = run(PipelineKind::MultiAgent, &backend).unwrap_err();
    assert!(matches!(err, WorkflowError::BudgetExceeded { budget: 60, .. }), "{err}");
}

#[test]
fn gateway_errors_carry_the_stage() {
    let backend = FnBackend::new(|req: &ChatRequest| {
        if req.request_tag == "conflict_detection" {
            Err(GatewayError::Unauthorized("bad key".into()))
        } else {
            reply_for(&Scenario::default(), &req.request_tag)
        }
    });
    let err = run(PipelineKind::SingleAgent, &backend).unwrap_err();
    assert_eq!(err.tag(), Some("conflict_detection"));
}

#[test]
fn replay_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let scenario = Scenario {
        conflicts: vec![script(true, &["cardiology", "nephrology"], Some(3)), script(false, &[], None)],
        ..Default::default()
    };
    let case = toy_case();
    let lexicon = toy_lexicon();
    let config = RunConfig::new(PipelineKind::MultiAgent, "m");
    let templates = TemplateSet::builtin();

    let live = scenario_backend(scenario);
    let mut gateway = Gateway::new(&live).with_recording(RecordingSession::create(&path, "r").unwrap());
    let original = run_pipeline("r", &case, &lexicon, &config, &templates, &mut gateway).unwrap();
    gateway.finish().unwrap();

    let replay = ReplayBackend::from_transcript(&path).unwrap();
    let mut gateway = Gateway::new(&replay);
    let again = run_pipeline("r", &case, &lexicon, &config, &templates, &mut gateway).unwrap();
    assert_eq!(RunRecord { backend: original.backend.clone(), ..again }, original);
}

use std::collections::{BTreeMap, BTreeSet};

use super::{
    MdtAssignment, MdtEntry, PipelineKind, Resolution, RunConfig, RunRecord, RunWarning, WarningKind, WorkflowError,
};
use crate::case::{
    normalize_drug, normalize_text, Conflict, ConflictLexicon, ConflictMembers, ConflictSet, DrugPair, Medication,
    PatientCase, Prescription,
};
use crate::gateway::{ChatMessage, ChatRequest, Gateway};
use crate::roles::{
    detect_consensus, format_conflict, format_conflicts, format_goals, format_plan, format_recommendations,
    normalize_proposal, parse_block, patient_summary, repair_instruction, AgentRole, Block, ConflictsBlock, Context,
    GoalItem, GoalsBlock, MdtBlock, PlanBlock, ResolutionBlock, RoleError, SpecialistStatement, Stage, StatementBlock,
    TemplateSet,
};
use crate::SCHEMA_VERSION;

/// A reply that parsed but cannot be used. `terminal` replaces the generic
/// parse failure when the repair attempt is rejected too.
struct Rejection {
    failures: Vec<String>,
    terminal: Option<WorkflowError>,
}

impl Rejection {
    fn new(failures: Vec<String>) -> Self {
        Rejection { failures, terminal: None }
    }
}

/// One run in progress: the case, its lexicon and the gateway to talk through.
pub struct Session<'s, 'a> {
    case: &'s PatientCase,
    lexicon: &'s ConflictLexicon,
    config: &'s RunConfig,
    templates: &'s TemplateSet,
    gateway: &'s mut Gateway<'a>,
    summary: String,
    warnings: Vec<RunWarning>,
}

fn specialty_slug(specialty: &str) -> String {
    normalize_text(specialty).replace(' ', "-")
}

fn format_statement(s: &SpecialistStatement) -> String {
    let stance = match s.stance {
        crate::roles::Stance::Agree => "agree",
        crate::roles::Stance::Revise => "revise",
    };
    let proposal: Vec<String> = s.proposal.iter().map(|a| a.describe()).collect();
    let proposal = if proposal.is_empty() { "(none)".to_string() } else { proposal.join("; ") };
    format!("- {} ({stance}): {}\n  proposal: {proposal}", s.agent_id, s.position.trim())
}

fn format_discussion(statements: &[SpecialistStatement]) -> String {
    if statements.is_empty() {
        return "(no statements yet)".into();
    }
    let mut out = Vec::new();
    let mut current = None;
    for s in statements {
        if current != Some(s.round) {
            out.push(format!("Round {}:", s.round));
            current = Some(s.round);
        }
        out.push(format_statement(s));
    }
    out.join("\n")
}

impl<'s, 'a> Session<'s, 'a> {
    pub fn new(
        case: &'s PatientCase,
        lexicon: &'s ConflictLexicon,
        config: &'s RunConfig,
        templates: &'s TemplateSet,
        gateway: &'s mut Gateway<'a>,
    ) -> Self {
        Session { summary: patient_summary(case), case, lexicon, config, templates, gateway, warnings: Vec::new() }
    }

    pub fn warnings(&self) -> &[RunWarning] {
        &self.warnings
    }

    fn context(&self, extra: &[(&str, String)]) -> Context {
        let mut ctx = Context::new();
        ctx.insert("patient_summary".into(), self.summary.clone());
        for (k, v) in extra {
            ctx.insert((*k).to_string(), v.clone());
        }
        ctx
    }

    fn exchange(
        &mut self,
        agent: &AgentRole,
        round: Option<u32>,
        tag: &str,
        messages: Vec<ChatMessage>,
    ) -> Result<String, WorkflowError> {
        if self.gateway.exchanges() >= self.config.exchange_budget {
            return Err(WorkflowError::BudgetExceeded { budget: self.config.exchange_budget, tag: tag.into() });
        }
        let mut request = ChatRequest::new(self.config.model_id.clone(), tag, messages);
        request.temperature = Some(self.config.sampling.temperature);
        request.max_tokens = Some(self.config.sampling.max_tokens);
        let response = self
            .gateway
            .complete(&agent.agent_id, round, request)
            .map_err(|source| WorkflowError::Gateway { tag: tag.into(), source })?;
        Ok(response.content)
    }

    /// Renders, sends, parses and accepts; one repair re-prompt on failure.
    fn ask<B: Block, T>(
        &mut self,
        agent: &AgentRole,
        round: Option<u32>,
        stage: Stage,
        tag: &str,
        context: &Context,
        accept: impl Fn(B) -> Result<T, Rejection>,
    ) -> Result<T, WorkflowError> {
        #[allow(clippy::result_large_err)]
        let evaluate = |reply: &str| -> Result<T, (RoleError, Option<WorkflowError>)> {
            let block = parse_block::<B>(reply).map_err(|e| (e, None))?;
            accept(block).map_err(|r| {
                (RoleError::SchemaMismatch { schema_id: B::SCHEMA_ID.into(), failures: r.failures }, r.terminal)
            })
        };

        let prompt = self.templates.render(stage, context).map_err(WorkflowError::Template)?;
        let mut messages = vec![ChatMessage::system(agent.persona()), ChatMessage::user(prompt)];
        let reply = self.exchange(agent, round, tag, messages.clone())?;
        let error = match evaluate(&reply) {
            Ok(value) => return Ok(value),
            Err((error, _)) => error,
        };
        tracing::warn!(tag, %error, "reply rejected; sending one repair prompt");
        messages.push(ChatMessage::assistant(reply));
        messages.push(ChatMessage::user(repair_instruction(&error, B::SCHEMA_ID)));
        let reply = self.exchange(agent, round, &format!("{tag}#repair"), messages)?;
        evaluate(&reply).map_err(|(source, terminal)| {
            terminal.unwrap_or_else(|| WorkflowError::ParseFailure { tag: tag.into(), source })
        })
    }

    fn plan_acceptor(&self) -> impl Fn(PlanBlock) -> Result<(Prescription, Option<String>), Rejection> + 's {
        let lexicon = self.lexicon;
        move |block: PlanBlock| {
            let medications = block
                .medications
                .into_iter()
                .map(|item| Medication {
                    canonical: normalize_drug(&item.drug, lexicon).0,
                    display_name: item.drug.trim().to_string(),
                    dose: item.dose,
                    frequency: item.frequency,
                    action: item.action,
                    rationale: item.rationale,
                    timing: item.timing,
                })
                .collect();
            let plan = Prescription { medications, monitoring: block.monitoring };
            plan.validate().map_err(|e| Rejection::new(vec![format!("$.medications: {e}")]))?;
            Ok((plan, block.rationale))
        }
    }

    /// Pure pipeline: one exchange straight to a plan.
    pub fn pure_plan(&mut self) -> Result<(Prescription, Option<String>), WorkflowError> {
        let ctx = self.context(&[]);
        let accept = self.plan_acceptor();
        self.ask(&AgentRole::gp(), None, Stage::PurePlan, "pure_plan", &ctx, accept)
    }

    pub fn identify_goals(&mut self) -> Result<Vec<GoalItem>, WorkflowError> {
        let ctx = self.context(&[]);
        let lexicon = self.lexicon;
        self.ask(&AgentRole::gp(), None, Stage::GoalIdentification, "goal_identification", &ctx, |b: GoalsBlock| {
            Ok(b.goals
                .into_iter()
                .map(|g| GoalItem {
                    description: g.description.trim().to_string(),
                    medications: g.medications.iter().map(|m| normalize_drug(m, lexicon).0).collect(),
                })
                .collect())
        })
    }

    /// Parses the GP's conflict list, normalizing members and merging duplicates.
    pub fn detect_conflicts(&mut self, goals: &[GoalItem]) -> Result<ConflictSet, WorkflowError> {
        let ctx = self.context(&[("goals", format_goals(goals))]);
        let (case, lexicon) = (self.case, self.lexicon);
        let (set, warnings) = self.ask(
            &AgentRole::gp(),
            None,
            Stage::ConflictDetection,
            "conflict_detection",
            &ctx,
            |b: ConflictsBlock| {
                let mut set = ConflictSet::new();
                let mut warnings = Vec::new();
                for item in b.conflicts {
                    let drugs: Vec<String> = item.drugs.iter().map(|d| normalize_drug(d, lexicon).0).collect();
                    let members = if item.kind == "ddi" {
                        let pair = DrugPair::new(drugs[0].clone(), drugs[1].clone())
                            .map_err(|e| Rejection::new(vec![format!("$.conflicts: {e}")]))?;
                        ConflictMembers::Ddi { drugs: pair }
                    } else {
                        let raw = item.condition.as_deref().unwrap_or_default();
                        let condition = match case.resolve_condition(raw) {
                            Some(c) => c.canonical.clone(),
                            None => {
                                let text = normalize_text(raw);
                                warnings.push(RunWarning {
                                    kind: WarningKind::UnknownCondition,
                                    subject: text.clone(),
                                    message: format!("condition `{raw}` is not among the case's conditions"),
                                });
                                text
                            }
                        };
                        ConflictMembers::Contraindication { drug: drugs[0].clone(), condition }
                    };
                    let mut conflict = Conflict::from_members(members);
                    conflict.severity = item.severity.filter(|s| !s.trim().is_empty());
                    conflict.description = item.description.trim().to_string();
                    set.insert(conflict);
                }
                Ok((set, warnings))
            },
        )?;
        self.warnings.extend(warnings);
        Ok(set)
    }

    /// Routes each conflict to a capped, deduplicated list of specialties, or
    /// to the GP when the GP declines to convene a team.
    pub fn form_mdt(&mut self, conflicts: &ConflictSet) -> Result<MdtAssignment, WorkflowError> {
        let max = self.config.max_specialties_per_conflict;
        let ctx = self.context(&[("conflicts", format_conflicts(conflicts)), ("max_specialties", max.to_string())]);
        let (assignment, warnings) =
            self.ask(&AgentRole::gp(), None, Stage::MdtFormation, "mdt_formation", &ctx, |b: MdtBlock| {
                let mut failures = Vec::new();
                let mut terminal = None;
                let mut by_id = BTreeMap::new();
                for (i, item) in b.assignments.iter().enumerate() {
                    let id = item.conflict_id.trim();
                    if conflicts.get(id).is_none() {
                        failures.push(format!("$.assignments[{i}].conflict_id: unknown conflict `{id}`"));
                    } else if by_id.insert(id.to_string(), item).is_some() {
                        failures.push(format!("$.assignments[{i}].conflict_id: `{id}` assigned twice"));
                    }
                }

                let mut assignment = MdtAssignment::default();
                let mut warnings = Vec::new();
                for conflict in conflicts {
                    let id = &conflict.conflict_id;
                    let Some(item) = by_id.get(id.as_str()) else {
                        failures.push(format!("$.assignments: conflict `{id}` is missing"));
                        terminal.get_or_insert(WorkflowError::EmptyAssignment { conflict_id: id.clone() });
                        continue;
                    };
                    if !item.convene_mdt {
                        assignment.gp_resolved.push(id.clone());
                        continue;
                    }
                    let mut specialties: Vec<String> = Vec::new();
                    for s in &item.specialties {
                        let s = normalize_text(s);
                        if !s.is_empty() && !specialties.contains(&s) {
                            specialties.push(s);
                        }
                    }
                    if specialties.is_empty() {
                        failures.push(format!("$.assignments: conflict `{id}` convenes a team without specialties"));
                        terminal.get_or_insert(WorkflowError::EmptyAssignment { conflict_id: id.clone() });
                        continue;
                    }
                    if specialties.len() > max {
                        warnings.push(RunWarning {
                            kind: WarningKind::SpecialtyCapApplied,
                            subject: id.clone(),
                            message: format!(
                                "{} specialties proposed, kept the first {max}: {}",
                                specialties.len(),
                                specialties[..max].join(", ")
                            ),
                        });
                        specialties.truncate(max);
                    }
                    assignment.entries.push(MdtEntry { conflict_id: id.clone(), specialties });
                }
                if !failures.is_empty() {
                    return Err(Rejection { failures, terminal });
                }
                let distinct: BTreeSet<&String> = assignment.entries.iter().flat_map(|e| &e.specialties).collect();
                assignment.roster = distinct.into_iter().map(|s| AgentRole::specialist(s)).collect();
                Ok((assignment, warnings))
            })?;
        self.warnings.extend(warnings);
        Ok(assignment)
    }

    /// Resolves one conflict: GP or single specialist directly, otherwise a
    /// forum of rounds with the mediator as fallback.
    pub fn resolve_conflict(
        &mut self,
        conflict: &Conflict,
        specialties: &[String],
    ) -> Result<Resolution, WorkflowError> {
        match specialties {
            [] => self.direct_resolution(conflict, AgentRole::gp(), "you, the general practitioner", "gp"),
            [only] => {
                let agent = AgentRole::specialist(only);
                let responder = format!("a specialist in {}", agent.specialty.as_deref().unwrap_or(only));
                let slug = specialty_slug(only);
                self.direct_resolution(conflict, agent, &responder, &slug)
            }
            many => self.forum(conflict, many),
        }
    }

    fn direct_resolution(
        &mut self,
        conflict: &Conflict,
        agent: AgentRole,
        responder: &str,
        slug: &str,
    ) -> Result<Resolution, WorkflowError> {
        let ctx = self.context(&[("responder", responder.to_string()), ("conflict", format_conflict(conflict))]);
        let tag = format!("direct_resolution/{}/{slug}", conflict.conflict_id);
        let block = self.ask(&agent, None, Stage::DirectResolution, &tag, &ctx, |b: ResolutionBlock| Ok(b))?;
        Ok(Resolution {
            conflict_id: conflict.conflict_id.clone(),
            recommendation: block.recommendation,
            rationale: block.rationale.trim().to_string(),
            rounds_used: 0,
            mediator_invoked: false,
            gp_resolved: agent.role_kind == crate::roles::RoleKind::Gp,
            contributing_agents: vec![agent.agent_id],
            history: Vec::new(),
        })
    }

    fn forum(&mut self, conflict: &Conflict, specialties: &[String]) -> Result<Resolution, WorkflowError> {
        let agents: Vec<AgentRole> = specialties.iter().map(|s| AgentRole::specialist(s)).collect();
        let max_rounds = self.config.forum.max_rounds;
        let conflict_text = format_conflict(conflict);
        let mut history: Vec<SpecialistStatement> = Vec::new();
        let contributing: Vec<String> = agents.iter().map(|a| a.agent_id.clone()).collect();

        for round in 1..=max_rounds {
            let mut this_round: Vec<SpecialistStatement> = Vec::new();
            for agent in &agents {
                let mut visible = history.clone();
                if self.config.forum.sequential_visibility {
                    visible.extend(this_round.iter().cloned());
                }
                let specialty = agent.specialty.clone().unwrap_or_default();
                let ctx = self.context(&[
                    ("specialty", specialty.clone()),
                    ("conflict", conflict_text.clone()),
                    ("round", round.to_string()),
                    ("max_rounds", max_rounds.to_string()),
                    ("discussion", format_discussion(&visible)),
                ]);
                let tag =
                    format!("specialist_statement/{}/{}/r{round}", conflict.conflict_id, specialty_slug(&specialty));
                let block =
                    self.ask(agent, Some(round), Stage::SpecialistStatement, &tag, &ctx, |b: StatementBlock| Ok(b))?;
                this_round.push(SpecialistStatement::from_block(agent.agent_id.clone(), round, block));
            }
            let outcome = detect_consensus(&this_round, self.lexicon).expect("statements of one round");
            let positions = this_round
                .iter()
                .map(|s| format!("{}: {}", s.agent_id, s.position.trim()))
                .collect::<Vec<_>>()
                .join("\n");
            history.extend(this_round);
            if let (true, Some(proposal)) = (outcome.reached, outcome.proposal) {
                return Ok(Resolution {
                    conflict_id: conflict.conflict_id.clone(),
                    recommendation: proposal,
                    rationale: positions,
                    rounds_used: round,
                    mediator_invoked: false,
                    gp_resolved: false,
                    contributing_agents: contributing,
                    history,
                });
            }
        }

        let final_positions =
            history.iter().filter(|s| s.round == max_rounds).map(format_statement).collect::<Vec<_>>().join("\n");
        let ctx = self.context(&[
            ("conflict", conflict_text),
            ("final_positions", final_positions),
            ("discussion", format_discussion(&history)),
        ]);
        let mediator = AgentRole::mediator();
        let tag = format!("mediator_summary/{}", conflict.conflict_id);
        let block = self.ask(&mediator, None, Stage::MediatorSummary, &tag, &ctx, |b: ResolutionBlock| Ok(b))?;
        let mut contributing_agents = contributing;
        contributing_agents.push(mediator.agent_id);
        Ok(Resolution {
            conflict_id: conflict.conflict_id.clone(),
            recommendation: block.recommendation,
            rationale: block.rationale.trim().to_string(),
            rounds_used: max_rounds,
            mediator_invoked: true,
            gp_resolved: false,
            contributing_agents,
            history,
        })
    }

    /// Final GP exchange producing the revised plan.
    ///
    /// With `resolutions` (multi-agent) the GP integrates the recommendations
    /// and the result is checked for provenance and overlapping advice. Without
    /// them (single-agent) the GP resolves the detected conflicts alone.
    pub fn integrate(
        &mut self,
        goals: &[GoalItem],
        conflicts: &ConflictSet,
        resolutions: Option<&[Resolution]>,
    ) -> Result<(Prescription, Option<String>), WorkflowError> {
        let recommendations = match resolutions {
            Some(resolutions) => {
                let labels: Vec<(String, String)> = resolutions
                    .iter()
                    .map(|r| {
                        let label =
                            conflicts.get(&r.conflict_id).map(format_conflict).unwrap_or_else(|| r.conflict_id.clone());
                        let source = if r.gp_resolved {
                            "the general practitioner".to_string()
                        } else if r.mediator_invoked {
                            "the mediator after the team discussion".to_string()
                        } else {
                            r.contributing_agents.join(", ")
                        };
                        (label, source)
                    })
                    .collect();
                format_recommendations(
                    resolutions
                        .iter()
                        .zip(&labels)
                        .map(|(r, (l, s))| (l.as_str(), s.as_str(), &r.recommendation[..], r.rationale.as_str())),
                )
            }
            None => format!(
                "No specialists were consulted. Resolve these detected conflicts yourself:\n{}",
                format_conflicts(conflicts)
            ),
        };
        let ctx = self.context(&[
            ("original_plan", format_plan(&self.case.initial_plan)),
            ("goals", format_goals(goals)),
            ("recommendations", recommendations),
        ]);
        let accept = self.plan_acceptor();
        let (plan, rationale) = self.ask(&AgentRole::gp(), None, Stage::Integration, "integration", &ctx, accept)?;
        if let Some(resolutions) = resolutions {
            self.check_provenance(&plan, resolutions);
            self.check_overlaps(resolutions);
        }
        Ok((plan, rationale))
    }

    fn check_provenance(&mut self, plan: &Prescription, resolutions: &[Resolution]) {
        let mut sources = self.case.initial_plan.all_ids();
        for r in resolutions {
            for a in normalize_proposal(&r.recommendation, self.lexicon) {
                sources.insert(a.drug);
                sources.extend(a.replacement);
            }
        }
        for m in &plan.medications {
            if !sources.contains(&m.canonical) {
                self.warnings.push(RunWarning {
                    kind: WarningKind::ProvenanceViolation,
                    subject: m.canonical.clone(),
                    message: format!(
                        "`{}` is neither in the original plan nor named by any resolution",
                        m.display_name
                    ),
                });
            }
        }
    }

    fn check_overlaps(&mut self, resolutions: &[Resolution]) {
        let mut by_drug: BTreeMap<String, BTreeMap<String, BTreeSet<String>>> = BTreeMap::new();
        for r in resolutions {
            for a in normalize_proposal(&r.recommendation, self.lexicon) {
                let action = match &a.replacement {
                    Some(rep) => format!("{} -> {rep}", a.action.as_str()),
                    None => a.action.as_str().to_string(),
                };
                by_drug.entry(a.drug).or_default().entry(r.conflict_id.clone()).or_default().insert(action);
            }
        }
        for (drug, per_conflict) in by_drug {
            let distinct: BTreeSet<&BTreeSet<String>> = per_conflict.values().collect();
            if per_conflict.len() > 1 && distinct.len() > 1 {
                let detail = per_conflict
                    .iter()
                    .map(|(c, actions)| format!("{c}: {}", actions.iter().cloned().collect::<Vec<_>>().join(", ")))
                    .collect::<Vec<_>>()
                    .join("; ");
                self.warnings.push(RunWarning {
                    kind: WarningKind::ResolutionOverlap,
                    subject: drug.clone(),
                    message: format!("resolutions disagree on `{drug}`: {detail}"),
                });
            }
        }
    }
}

/// Runs one pipeline on one case. The gateway's recording, if any, receives
/// every exchange; finishing it is left to the caller.
pub fn run_pipeline(
    run_id: &str,
    case: &PatientCase,
    lexicon: &ConflictLexicon,
    config: &RunConfig,
    templates: &TemplateSet,
    gateway: &mut Gateway<'_>,
) -> Result<RunRecord, WorkflowError> {
    config.validate()?;
    let backend = gateway.backend().describe();
    let mut goals_out = None;
    let mut conflicts_out = None;
    let mut assignment_out = None;
    let mut resolutions_out = None;

    let mut session = Session::new(case, lexicon, config, templates, gateway);
    let (revised_plan, plan_rationale) = match config.pipeline {
        PipelineKind::Pure => session.pure_plan()?,
        PipelineKind::SingleAgent => {
            let goals = session.identify_goals()?;
            let conflicts = session.detect_conflicts(&goals)?;
            let plan = session.integrate(&goals, &conflicts, None)?;
            goals_out = Some(goals);
            conflicts_out = Some(conflicts);
            plan
        }
        PipelineKind::MultiAgent => {
            let goals = session.identify_goals()?;
            let conflicts = session.detect_conflicts(&goals)?;
            let assignment =
                if conflicts.is_empty() { MdtAssignment::default() } else { session.form_mdt(&conflicts)? };
            let mut resolutions = Vec::with_capacity(conflicts.len());
            for conflict in &conflicts {
                let specialties =
                    assignment.entry(&conflict.conflict_id).map(|e| e.specialties.clone()).unwrap_or_default();
                resolutions.push(session.resolve_conflict(conflict, &specialties)?);
            }
            let plan = session.integrate(&goals, &conflicts, Some(&resolutions))?;
            goals_out = Some(goals);
            conflicts_out = Some(conflicts);
            assignment_out = Some(assignment);
            resolutions_out = Some(resolutions);
            plan
        }
    };
    let mut warnings = session.warnings.clone();
    drop(session);
    warnings.sort();
    warnings.dedup();

    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        run_id: run_id.to_string(),
        case_id: case.case_id.clone(),
        pipeline: config.pipeline,
        model_id: config.model_id.clone(),
        backend,
        config: config.clone(),
        detected_goals: goals_out,
        detected_conflicts: conflicts_out,
        assignment: assignment_out,
        resolutions: resolutions_out,
        original_plan: case.initial_plan.clone(),
        revised_plan,
        plan_rationale,
        transcript: None,
        exchange_count: gateway.exchanges(),
        request_digests: gateway.digests().to_vec(),
        prompt_digests: templates.digests(),
        warnings,
    };
    debug_assert!(record.validate().is_ok(), "{:?}", record.validate());
    Ok(record)
}

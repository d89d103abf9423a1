//! Deterministic text renderings of case data for prompt contexts.

use std::fmt::Write;

use super::{GoalItem, ProposedAction};
use crate::case::{Conflict, ConflictSet, Medication, PatientCase, Prescription};

fn medication_line(m: &Medication) -> String {
    let mut line = format!("- {} [{}]", m.display_name, m.action.as_str());
    for part in [&m.dose, &m.frequency].into_iter().flatten() {
        let _ = write!(line, " {part}");
    }
    if let Some(timing) = &m.timing {
        let _ = write!(line, "; timing: {timing}");
    }
    if let Some(rationale) = &m.rationale {
        let _ = write!(line, "; {rationale}");
    }
    line
}

pub fn format_plan(plan: &Prescription) -> String {
    let mut out = String::new();
    if plan.medications.is_empty() {
        out.push_str("(no medications)\n");
    }
    for m in &plan.medications {
        out.push_str(&medication_line(m));
        out.push('\n');
    }
    if !plan.monitoring.is_empty() {
        out.push_str("Monitoring:\n");
        for directive in &plan.monitoring {
            let _ = writeln!(out, "- {directive}");
        }
    }
    out.trim_end().to_string()
}

/// Full clinical picture shown to every agent.
pub fn patient_summary(case: &PatientCase) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Patient: {}", case.demographics);
    let names: Vec<&str> = case.conditions.iter().map(|c| c.name.as_str()).collect();
    let _ = writeln!(out, "Conditions: {}", names.join("; "));
    let _ = writeln!(out, "Chief complaint: {}", case.chief_complaint);
    let _ = writeln!(out, "History: {}", case.history);
    if let Some(findings) = &case.physical_findings {
        let _ = writeln!(out, "Physical findings: {findings}");
    }
    if !case.labs.is_empty() {
        out.push_str("Laboratory data:\n");
        for lab in &case.labs {
            let _ = writeln!(out, "- {}: {}", lab.name, lab.value);
        }
    }
    out.push_str("Current prescription:\n");
    out.push_str(&format_plan(&case.initial_plan));
    out
}

pub fn format_goals(goals: &[GoalItem]) -> String {
    if goals.is_empty() {
        return "(none identified)".into();
    }
    goals
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let meds = if g.medications.is_empty() { "no current medication".into() } else { g.medications.join(", ") };
            format!("{}. {} (served by: {meds})", i + 1, g.description)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn format_conflict(conflict: &Conflict) -> String {
    let mut line = format!("[{}] {}", conflict.conflict_id, conflict.label());
    if let Some(severity) = &conflict.severity {
        let _ = write!(line, " (severity: {severity})");
    }
    if !conflict.description.trim().is_empty() {
        let _ = write!(line, ": {}", conflict.description.trim());
    }
    line
}

pub fn format_conflicts(conflicts: &ConflictSet) -> String {
    if conflicts.is_empty() {
        return "(none)".into();
    }
    conflicts.iter().map(|c| format!("- {}", format_conflict(c))).collect::<Vec<_>>().join("\n")
}

/// One paragraph per resolved conflict: label, source, actions and rationale.
pub fn format_recommendations<'a, I>(items: I) -> String
where
    I: IntoIterator<Item = (&'a str, &'a str, &'a [ProposedAction], &'a str)>,
{
    let mut out = String::new();
    for (label, source, actions, rationale) in items {
        let _ = writeln!(out, "{label} (resolved by {source}):");
        if actions.is_empty() {
            out.push_str("- no medication change\n");
        }
        for action in actions {
            let _ = writeln!(out, "- {}", action.describe());
        }
        if !rationale.trim().is_empty() {
            let _ = writeln!(out, "Rationale: {}", rationale.trim());
        }
        out.push('\n');
    }
    let text = out.trim_end().to_string();
    if text.is_empty() {
        "(no conflicts required consultation)".into()
    } else {
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{DrugPair, MedicationAction};

    #[test]
    fn conflict_lines_carry_id_and_members() {
        let mut c = Conflict::ddi("ddi:a+b", DrugPair::new("warfarin", "trimethoprim-sulfamethoxazole").unwrap());
        c.description = "raises INR".into();
        assert_eq!(format_conflict(&c), "[ddi:a+b] DDI trimethoprim-sulfamethoxazole + warfarin: raises INR");
        assert_eq!(format_conflicts(&ConflictSet::new()), "(none)");
    }

    #[test]
    fn recommendations_list_every_action() {
        let actions = [ProposedAction::replacing("aspirin", "clopidogrel")];
        let text = format_recommendations([("c1", "cardiology", &actions[..], "lower bleeding risk")]);
        assert!(text.contains("- replace aspirin with clopidogrel"));
        assert!(text.contains("Rationale: lower bleeding risk"));
        let stop = [ProposedAction::new(MedicationAction::Stop, "nsaid")];
        assert!(format_recommendations([("c2", "gp", &stop[..], "")]).contains("- stop nsaid"));
        assert_eq!(format_recommendations([]), "(no conflicts required consultation)");
    }
}

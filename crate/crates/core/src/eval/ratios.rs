use serde::{Deserialize, Serialize};

use super::classify::{ActionClassification, Target};
use super::{EvalError, RatioPair, Rational};
use crate::case::{count_conflicts, ConflictLexicon, GoldStandard, PatientCase, Prescription};

/// Conflict and medication counts for one plan. Rational so an adjudicator
/// can count, say, a temporarily suspended drug as half.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanCounts {
    pub ddi: Rational,
    pub contraindication: Rational,
    pub medication: Rational,
}

impl PlanCounts {
    /// Lexicon-based counts over the plan's active medications.
    pub fn mechanical(plan: &Prescription, case: &PatientCase, lexicon: &ConflictLexicon) -> Self {
        let conflicts = count_conflicts(plan, &case.conditions, lexicon);
        PlanCounts {
            ddi: conflicts.ddi_count.into(),
            contraindication: conflicts.contraindication_count.into(),
            medication: plan.active_ids().len().into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioMetrics {
    pub ddi_ratio: RatioPair,
    pub contraindication_ratio: RatioPair,
    pub medication_ratio: RatioPair,
}

/// Revised over original for each count; pairs are kept even when the
/// original count is zero.
pub fn ratio_metrics(original: &PlanCounts, revised: &PlanCounts) -> RatioMetrics {
    let pair = |r: Rational, o: Rational| RatioPair::new(r, o);
    RatioMetrics {
        ddi_ratio: pair(revised.ddi, original.ddi),
        contraindication_ratio: pair(revised.contraindication, original.contraindication),
        medication_ratio: pair(revised.medication, original.medication),
    }
}

/// Met goals out of a total. `met` may be fractional when an adjudicator
/// counts a goal as partly met.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalCount {
    pub met: Rational,
    pub total: u32,
}

impl GoalCount {
    pub fn new(met: impl Into<Rational>, total: u32) -> Self {
        GoalCount { met: met.into(), total }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.total == 0 || self.met < Rational::zero() || self.met > Rational::from(self.total as i64) {
            return Err(EvalError::InvalidGoalCount { met: self.met, total: self.total });
        }
        Ok(())
    }

    fn fraction(&self) -> Rational {
        self.met / Rational::from(self.total as i64)
    }
}

/// Met-goal fraction of the revised plan over that of the original plan.
/// Undefined when the original plan meets no goal.
pub fn met_goal_ratio(revised: GoalCount, original: GoalCount) -> Result<Option<Rational>, EvalError> {
    revised.validate()?;
    original.validate()?;
    if original.met.is_zero() {
        return Ok(None);
    }
    Ok(Some(revised.fraction() / original.fraction()))
}

/// Starting point for the adjudicator's goal counts.
///
/// A goal is met by the original plan when one of its medications is active.
/// It is met by the revised plan when a credited gold action serves it, or
/// when it was met before and that medication is still active.
pub fn suggest_goal_counts(
    case: &PatientCase,
    gold: &GoldStandard,
    classifications: &[ActionClassification],
    revised_plan: &Prescription,
) -> Option<(GoalCount, GoalCount)> {
    if case.goals.is_empty() {
        return None;
    }
    let before = case.initial_plan.active_ids();
    let after = revised_plan.active_ids();
    let credited: Vec<&str> = classifications
        .iter()
        .filter(|c| c.label.is_credit())
        .filter_map(|c| match &c.target {
            Target::Gold(id) => Some(id.as_str()),
            Target::Other(_) => None,
        })
        .collect();
    let mut original_met = 0i64;
    let mut revised_met = 0i64;
    for goal in &case.goals {
        if goal.addressed_by.iter().any(|m| before.contains(m)) {
            original_met += 1;
        }
        let served =
            gold.actions().any(|a| credited.contains(&a.action_id.as_str()) && a.goal_ids.contains(&goal.goal_id));
        if served || goal.addressed_by.iter().any(|m| before.contains(m) && after.contains(m)) {
            revised_met += 1;
        }
    }
    let total = case.goals.len() as u32;
    Some((GoalCount::new(original_met, total), GoalCount::new(revised_met, total)))
}

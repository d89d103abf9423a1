//! Scoring of finished runs against a case's gold standard.
//!
//! Classifications and ratings are entered by human adjudicators; this module
//! only does the accounting. All stored metrics are exact rationals.

mod classify;
mod documents;
mod likert;
mod rational;
mod ratios;

pub use classify::{
    completeness, correctness, preferred_included, tally, tally_partial, ActionClassification, ClassificationTally,
    Label, RatioPair, Target,
};
pub use documents::{
    ClassificationEntry, ClassificationsDocument, ConsensusEntry, CountOverrides, GoalCounts, RatingEntry,
    RatingsDocument,
};
pub use likert::{
    aggregate_likert, mean_and_std, radar_export, round2, Dimension, LikertRecord, LikertSummary, RadarAxis,
    RadarDocument, RadarInput, RadarSeries, DEFAULT_DISAGREEMENT_THRESHOLD,
};
pub use rational::{ParseRationalError, Rational};
pub use ratios::{met_goal_ratio, ratio_metrics, suggest_goal_counts, GoalCount, PlanCounts, RatioMetrics};

use serde::{Deserialize, Serialize};

use crate::case::{ConflictLexicon, GoldStandard, PatientCase, Prescription};
use crate::workflow::PipelineKind;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("gold actions not yet classified: {}", missing.join(", "))]
    IncompleteClassification { missing: Vec<String> },
    #[error("gold action total {expected} does not match classified total {actual}")]
    TotalMismatch { expected: u32, actual: u32 },
    #[error("the gold standard has no preferred option set")]
    NoPreferredSet,
    #[error("label `{label}` is not allowed for {target}")]
    InvalidLabel { target: String, label: Label },
    #[error("unknown gold action `{0}`")]
    UnknownGoldAction(String),
    #[error("{0} is classified more than once")]
    DuplicateClassification(String),
    #[error("item `{item}` repeats gold action `{gold_ref}`, which is not credited")]
    InconsistentRepeat { item: String, gold_ref: String },
    #[error("{0} has no adjudicator")]
    MissingAdjudicator(String),
    #[error("goal count {met}/{total} is invalid (need 1 <= total and met <= total)")]
    InvalidGoalCount { met: Rational, total: u32 },
    #[error("no ratings to aggregate")]
    NoRatings,
    #[error("ratings span more than one dimension")]
    MixedDimensions,
    #[error("score {score} from `{rater}` is outside 1..5")]
    ScoreOutOfRange { rater: String, score: u8 },
    #[error("`{0}` ratings agree closely enough that no consensus score is needed")]
    ConsensusNotNeeded(Dimension),
    #[error("run `{run_id}` belongs to case `{run_case}`, gold standard is for `{gold_case}`")]
    CaseMismatch { run_id: String, run_case: String, gold_case: String },
}

/// Where a count came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountSource {
    /// Lexicon counter or gold-link suggestion.
    Mechanical,
    Adjudicated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSummary {
    pub original: PlanCounts,
    pub revised: PlanCounts,
    pub source: CountSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSummary {
    pub original: GoalCount,
    pub revised: GoalCount,
    pub source: CountSource,
}

/// `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub run_id: String,
    pub case_id: String,
    pub pipeline: PipelineKind,
    pub model_id: String,
    /// Computed with unclassified gold actions counted as omissions.
    pub provisional: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unclassified: Vec<String>,
    pub tally: ClassificationTally,
    pub correctness: RatioPair,
    pub completeness: RatioPair,
    pub ddi_ratio: RatioPair,
    pub contraindication_ratio: RatioPair,
    pub medication_ratio: RatioPair,
    pub counts: CountSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub met_goal_ratio: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_counts: Option<GoalSummary>,
    /// Present only when the case has more than one option set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferred_included: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Everything needed to score one run.
pub struct MetricInputs<'a> {
    pub run_id: &'a str,
    pub pipeline: PipelineKind,
    pub model_id: &'a str,
    pub case: &'a PatientCase,
    pub gold: &'a GoldStandard,
    pub lexicon: &'a ConflictLexicon,
    pub original_plan: &'a Prescription,
    pub revised_plan: &'a Prescription,
    pub classifications: &'a ClassificationsDocument,
}

/// Scores a run. With `allow_partial`, unclassified gold actions count as
/// omissions and the report is marked provisional; otherwise they are an error.
pub fn evaluate(inputs: &MetricInputs<'_>, allow_partial: bool) -> Result<MetricReport, EvalError> {
    if inputs.gold.case_id != inputs.case.case_id {
        return Err(EvalError::CaseMismatch {
            run_id: inputs.run_id.into(),
            run_case: inputs.case.case_id.clone(),
            gold_case: inputs.gold.case_id.clone(),
        });
    }
    let doc = inputs.classifications;
    let classifications = doc.effective();
    let (tally, unclassified) = if allow_partial {
        tally_partial(&classifications, inputs.gold)?
    } else {
        (tally(&classifications, inputs.gold)?, Vec::new())
    };
    let mut flags = Vec::new();
    let provisional = !unclassified.is_empty();
    if provisional {
        flags.push("provisional".to_string());
    }

    let correctness = correctness(&tally);
    let completeness = completeness(&tally, inputs.gold.action_count() as u32)?;

    let mut counts = CountSummary {
        original: PlanCounts::mechanical(inputs.original_plan, inputs.case, inputs.lexicon),
        revised: PlanCounts::mechanical(inputs.revised_plan, inputs.case, inputs.lexicon),
        source: CountSource::Mechanical,
    };
    if let Some(o) = &doc.count_overrides {
        counts.original = o.original.unwrap_or(counts.original);
        counts.revised = o.revised.unwrap_or(counts.revised);
        counts.source = CountSource::Adjudicated;
        flags.push("counts_adjudicated".to_string());
    }
    let ratios = ratio_metrics(&counts.original, &counts.revised);

    let goal_counts = match &doc.goal_counts {
        Some(g) => Some(GoalSummary { original: g.original, revised: g.revised, source: CountSource::Adjudicated }),
        None => suggest_goal_counts(inputs.case, inputs.gold, &classifications, inputs.revised_plan).map(
            |(original, revised)| {
                flags.push("goal_counts_suggested".to_string());
                GoalSummary { original, revised, source: CountSource::Mechanical }
            },
        ),
    };
    let met_goal_ratio = match &goal_counts {
        Some(g) => met_goal_ratio(g.revised, g.original)?,
        None => None,
    };
    if met_goal_ratio.is_none() {
        flags.push("met_goal_ratio_undefined".to_string());
    }

    let preferred_included =
        if inputs.gold.option_sets.len() > 1 { Some(preferred_included(&classifications, inputs.gold)?) } else { None };

    Ok(MetricReport {
        schema_version: crate::SCHEMA_VERSION,
        run_id: inputs.run_id.into(),
        case_id: inputs.case.case_id.clone(),
        pipeline: inputs.pipeline,
        model_id: inputs.model_id.into(),
        provisional,
        unclassified,
        tally,
        correctness,
        completeness,
        ddi_ratio: ratios.ddi_ratio,
        contraindication_ratio: ratios.contraindication_ratio,
        medication_ratio: ratios.medication_ratio,
        counts,
        met_goal_ratio,
        goal_counts,
        preferred_included,
        flags,
    })
}

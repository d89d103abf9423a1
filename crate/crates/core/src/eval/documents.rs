//! Per-run adjudication files. Both are append-only: a new judgement for the
//! same target (or the same rater and dimension) marks the older entry as
//! superseded instead of replacing it.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::classify::ActionClassification;
use super::likert::{aggregate_likert, Dimension, LikertRecord, LikertSummary, MAX_SCORE, MIN_SCORE};
use super::ratios::{GoalCount, PlanCounts};
use super::EvalError;
use crate::case::GoldStandard;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub classification: ActionClassification,
    pub recorded_at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superseded_by: Option<u64>,
}

/// Adjudicator-entered goal counts for both plans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalCounts {
    pub original: GoalCount,
    pub revised: GoalCount,
    #[serde(default)]
    pub adjudicator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Replaces the mechanical conflict and medication counts for either plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<PlanCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised: Option<PlanCounts>,
    #[serde(default)]
    pub adjudicator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `classifications.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationsDocument {
    pub schema_version: u32,
    pub run_id: String,
    #[serde(default)]
    pub entries: Vec<ClassificationEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_counts: Option<GoalCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_overrides: Option<CountOverrides>,
}

impl ClassificationsDocument {
    pub fn new(run_id: &str) -> Self {
        ClassificationsDocument {
            schema_version: crate::SCHEMA_VERSION,
            run_id: run_id.into(),
            entries: Vec::new(),
            goal_counts: None,
            count_overrides: None,
        }
    }

    /// Current judgement per target, in submission order.
    pub fn effective(&self) -> Vec<ActionClassification> {
        self.entries.iter().filter(|e| e.superseded_by.is_none()).map(|e| e.classification.clone()).collect()
    }

    /// Records a judgement after checking it against the gold standard.
    /// Resubmitting the current judgement unchanged is a no-op; returns
    /// whether the document changed.
    pub fn submit(
        &mut self,
        classification: ActionClassification,
        gold: &GoldStandard,
        now_ms: u64,
    ) -> Result<bool, EvalError> {
        classification.check(gold)?;
        let seq = self.entries.iter().map(|e| e.seq).max().map_or(1, |s| s + 1);
        let current = self
            .entries
            .iter_mut()
            .find(|e| e.superseded_by.is_none() && e.classification.target == classification.target);
        match current {
            Some(e) if e.classification == classification => return Ok(false),
            Some(e) => e.superseded_by = Some(seq),
            None => {}
        }
        self.entries.push(ClassificationEntry { seq, classification, recorded_at_ms: now_ms, superseded_by: None });
        Ok(true)
    }

    pub fn set_goal_counts(&mut self, counts: GoalCounts) -> Result<(), EvalError> {
        counts.original.validate()?;
        counts.revised.validate()?;
        if counts.adjudicator.trim().is_empty() {
            return Err(EvalError::MissingAdjudicator("goal counts".into()));
        }
        self.goal_counts = Some(counts);
        Ok(())
    }

    pub fn set_count_overrides(&mut self, overrides: CountOverrides) -> Result<(), EvalError> {
        if overrides.adjudicator.trim().is_empty() {
            return Err(EvalError::MissingAdjudicator("count overrides".into()));
        }
        self.count_overrides = Some(overrides);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub record: LikertRecord,
    pub recorded_at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superseded_by: Option<u64>,
}

/// Score agreed after discussion of a contested dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusEntry {
    pub dimension: Dimension,
    pub score: f64,
    pub adjudicator: String,
    pub recorded_at_ms: u64,
}

/// `ratings.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsDocument {
    pub schema_version: u32,
    pub run_id: String,
    #[serde(default)]
    pub entries: Vec<RatingEntry>,
    #[serde(default)]
    pub consensus: Vec<ConsensusEntry>,
    /// Range at or above which a dimension needs a consensus score.
    #[serde(default = "default_threshold")]
    pub disagreement_threshold: u8,
}

fn default_threshold() -> u8 {
    super::likert::DEFAULT_DISAGREEMENT_THRESHOLD
}

impl RatingsDocument {
    pub fn new(run_id: &str) -> Self {
        RatingsDocument {
            schema_version: crate::SCHEMA_VERSION,
            run_id: run_id.into(),
            entries: Vec::new(),
            consensus: Vec::new(),
            disagreement_threshold: default_threshold(),
        }
    }

    pub fn effective(&self) -> Vec<LikertRecord> {
        self.entries.iter().filter(|e| e.superseded_by.is_none()).map(|e| e.record.clone()).collect()
    }

    /// Records a score; a rater's newer score for the same dimension
    /// supersedes the older one. Returns whether the document changed.
    pub fn submit(&mut self, record: LikertRecord, now_ms: u64) -> Result<bool, EvalError> {
        record.validate()?;
        let seq = self.entries.iter().map(|e| e.seq).max().map_or(1, |s| s + 1);
        let current = self.entries.iter_mut().find(|e| {
            e.superseded_by.is_none() && e.record.rater == record.rater && e.record.dimension == record.dimension
        });
        match current {
            Some(e) if e.record == record => return Ok(false),
            Some(e) => e.superseded_by = Some(seq),
            None => {}
        }
        self.entries.push(RatingEntry { seq, record, recorded_at_ms: now_ms, superseded_by: None });
        // A changed score invalidates an earlier consensus for that dimension.
        let dimension = self.entries.last().map(|e| e.record.dimension);
        self.consensus.retain(|c| Some(c.dimension) != dimension);
        Ok(true)
    }

    /// Enters the discussed score for a dimension flagged as contested.
    pub fn set_consensus(
        &mut self,
        dimension: Dimension,
        score: f64,
        adjudicator: &str,
        now_ms: u64,
    ) -> Result<(), EvalError> {
        if adjudicator.trim().is_empty() {
            return Err(EvalError::MissingAdjudicator(format!("consensus for {dimension}")));
        }
        if !(MIN_SCORE as f64..=MAX_SCORE as f64).contains(&score) {
            return Err(EvalError::ScoreOutOfRange { rater: adjudicator.into(), score: score.round() as u8 });
        }
        let needs = self.summaries()?.get(&dimension).is_some_and(|s| s.needs_consensus);
        if !needs {
            return Err(EvalError::ConsensusNotNeeded(dimension));
        }
        self.consensus.retain(|c| c.dimension != dimension);
        self.consensus.push(ConsensusEntry {
            dimension,
            score,
            adjudicator: adjudicator.into(),
            recorded_at_ms: now_ms,
        });
        Ok(())
    }

    /// One summary per rated dimension, with any consensus score applied.
    pub fn summaries(&self) -> Result<BTreeMap<Dimension, LikertSummary>, EvalError> {
        let mut by_dimension: BTreeMap<Dimension, Vec<LikertRecord>> = BTreeMap::new();
        for r in self.effective() {
            by_dimension.entry(r.dimension).or_default().push(r);
        }
        by_dimension
            .into_iter()
            .map(|(d, records)| {
                let mut s = aggregate_likert(&records, self.disagreement_threshold)?;
                s.consensus_score = self.consensus.iter().find(|c| c.dimension == d).map(|c| c.score);
                Ok((d, s))
            })
            .collect()
    }

    /// Every rated dimension that is contested and still lacks a consensus score.
    pub fn pending_consensus(&self) -> Result<Vec<Dimension>, EvalError> {
        Ok(self
            .summaries()?
            .into_values()
            .filter(|s| s.needs_consensus && s.consensus_score.is_none())
            .map(|s| s.dimension)
            .collect())
    }
}

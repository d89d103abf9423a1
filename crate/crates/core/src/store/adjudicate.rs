use serde::{Deserialize, Serialize};

use super::{now_ms, Corpus, RunStore, StoreError};
use crate::eval::{
    evaluate, ActionClassification, ClassificationsDocument, CountOverrides, Dimension, GoalCounts, LikertRecord,
    LikertSummary, MetricInputs, MetricReport, RatingsDocument,
};

/// Classifications as accepted from a file or a request body: a full
/// `classifications.json`, a bare list, or a list with count entries.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ClassificationSubmission {
    List(Vec<ActionClassification>),
    Bundle {
        classifications: Vec<ActionClassification>,
        #[serde(default)]
        goal_counts: Option<GoalCounts>,
        #[serde(default)]
        count_overrides: Option<CountOverrides>,
    },
    Document(ClassificationsDocument),
}

impl ClassificationSubmission {
    fn into_parts(self) -> (Vec<ActionClassification>, Option<GoalCounts>, Option<CountOverrides>) {
        match self {
            ClassificationSubmission::List(list) => (list, None, None),
            ClassificationSubmission::Bundle { classifications, goal_counts, count_overrides } => {
                (classifications, goal_counts, count_overrides)
            }
            ClassificationSubmission::Document(doc) => {
                let effective = doc.effective();
                (effective, doc.goal_counts, doc.count_overrides)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
pub struct ConsensusInput {
    pub dimension: Dimension,
    pub score: f64,
}

/// Likert scores, optionally with consensus scores for contested dimensions.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RatingsSubmission {
    List(Vec<LikertRecord>),
    Bundle {
        #[serde(default)]
        ratings: Vec<LikertRecord>,
        #[serde(default)]
        consensus: Vec<ConsensusInput>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingsOutcome {
    pub run_id: String,
    pub summaries: Vec<LikertSummary>,
    pub pending_consensus: Vec<Dimension>,
}

impl RunStore {
    /// Scores the run from its stored files without writing anything.
    pub fn score_run(&self, run_id: &str, corpus: &Corpus, allow_partial: bool) -> Result<MetricReport, StoreError> {
        let record = self.load_run(run_id)?;
        let bundle = corpus.load(&record.case_id)?;
        let classifications = self.load_classifications(run_id)?;
        Ok(evaluate(
            &MetricInputs {
                run_id,
                pipeline: record.pipeline,
                model_id: &record.model_id,
                case: &bundle.case,
                gold: &bundle.gold,
                lexicon: &bundle.lexicon,
                original_plan: &record.original_plan,
                revised_plan: &record.revised_plan,
                classifications: &classifications,
            },
            allow_partial,
        )?)
    }

    /// Merges a submission into classifications.json, then re-evaluates.
    ///
    /// Entries without an adjudicator take `adjudicator`. Nothing is written
    /// if any entry is invalid. Unchanged resubmissions leave the file as is.
    pub fn submit_classifications(
        &self,
        run_id: &str,
        corpus: &Corpus,
        submission: ClassificationSubmission,
        adjudicator: &str,
        allow_partial: bool,
    ) -> Result<MetricReport, StoreError> {
        let record = self.load_run(run_id)?;
        let bundle = corpus.load(&record.case_id)?;
        let mut doc = self.load_classifications(run_id)?;
        let (items, goal_counts, count_overrides) = submission.into_parts();
        let now = now_ms();
        let mut changed = false;
        for mut item in items {
            if item.adjudicator.trim().is_empty() {
                item.adjudicator = adjudicator.into();
            }
            changed |= doc.submit(item, &bundle.gold, now)?;
        }
        if let Some(mut counts) = goal_counts {
            if counts.adjudicator.trim().is_empty() {
                counts.adjudicator = adjudicator.into();
            }
            if doc.goal_counts.as_ref() != Some(&counts) {
                doc.set_goal_counts(counts)?;
                changed = true;
            }
        }
        if let Some(mut overrides) = count_overrides {
            if overrides.adjudicator.trim().is_empty() {
                overrides.adjudicator = adjudicator.into();
            }
            if doc.count_overrides.as_ref() != Some(&overrides) {
                doc.set_count_overrides(overrides)?;
                changed = true;
            }
        }
        if changed || !self.file(run_id, super::CLASSIFICATIONS_FILE).is_file() {
            self.save_classifications(run_id, &doc)?;
        }
        self.evaluate_run(run_id, corpus, allow_partial)
    }

    /// Records scores and consensus entries in ratings.json. Nothing is
    /// written if any entry is invalid.
    pub fn submit_ratings(
        &self,
        run_id: &str,
        submission: RatingsSubmission,
        adjudicator: &str,
    ) -> Result<RatingsOutcome, StoreError> {
        let mut doc = self.load_ratings(run_id)?;
        let (ratings, consensus) = match submission {
            RatingsSubmission::List(list) => (list, Vec::new()),
            RatingsSubmission::Bundle { ratings, consensus } => (ratings, consensus),
        };
        let now = now_ms();
        let mut changed = false;
        for record in ratings {
            changed |= doc.submit(record, now)?;
        }
        for c in consensus {
            let current = doc.consensus.iter().find(|e| e.dimension == c.dimension);
            if current.is_some_and(|e| e.score == c.score && e.adjudicator == adjudicator) {
                continue;
            }
            doc.set_consensus(c.dimension, c.score, adjudicator, now)?;
            changed = true;
        }
        if changed {
            self.save_ratings(run_id, &doc)?;
        }
        outcome(run_id, &doc)
    }

    pub fn ratings_outcome(&self, run_id: &str) -> Result<RatingsOutcome, StoreError> {
        outcome(run_id, &self.load_ratings(run_id)?)
    }
}

fn outcome(run_id: &str, doc: &RatingsDocument) -> Result<RatingsOutcome, StoreError> {
    Ok(RatingsOutcome {
        run_id: run_id.into(),
        summaries: doc.summaries()?.into_values().collect(),
        pending_consensus: doc.pending_consensus()?,
    })
}

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Explainability,
    Reasonableness,
    Efficiency,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Explainability, Dimension::Reasonableness, Dimension::Efficiency];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Explainability => "explainability",
            Dimension::Reasonableness => "reasonableness",
            Dimension::Efficiency => "efficiency",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim().to_lowercase())
            .ok_or_else(|| format!("unknown dimension `{s}`"))
    }
}

pub const MIN_SCORE: u8 = 1;
pub const MAX_SCORE: u8 = 5;
/// Score range at or above which raters must discuss.
pub const DEFAULT_DISAGREEMENT_THRESHOLD: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertRecord {
    pub rater: String,
    pub dimension: Dimension,
    pub score: u8,
}

impl LikertRecord {
    pub fn new(rater: &str, dimension: Dimension, score: u8) -> Self {
        LikertRecord { rater: rater.into(), dimension, score }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.rater.trim().is_empty() {
            return Err(EvalError::MissingAdjudicator(format!("rating for {}", self.dimension)));
        }
        if !(MIN_SCORE..=MAX_SCORE).contains(&self.score) {
            return Err(EvalError::ScoreOutOfRange { rater: self.rater.clone(), score: self.score });
        }
        Ok(())
    }
}

/// Mean and sample standard deviation, both rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertSummary {
    pub dimension: Dimension,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub needs_consensus: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_score: Option<f64>,
}

impl LikertSummary {
    /// The score shown in reports: the consensus score when entered, else the mean.
    pub fn reported(&self) -> f64 {
        self.consensus_score.unwrap_or(self.mean)
    }
}

impl fmt::Display for LikertSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)?;
        if let Some(c) = self.consensus_score {
            write!(f, " (consensus {c:.2})")?;
        }
        Ok(())
    }
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Unrounded mean and sample standard deviation. A single score has std 0.
pub fn mean_and_std(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    if scores.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = scores.iter().map(|s| (s - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Summarizes the ratings of one (case, model, dimension) cell.
pub fn aggregate_likert(records: &[LikertRecord], threshold: u8) -> Result<LikertSummary, EvalError> {
    let first = records.first().ok_or(EvalError::NoRatings)?;
    for r in records {
        r.validate()?;
        if r.dimension != first.dimension {
            return Err(EvalError::MixedDimensions);
        }
    }
    let scores: Vec<f64> = records.iter().map(|r| r.score as f64).collect();
    let (mean, std) = mean_and_std(&scores);
    let lo = records.iter().map(|r| r.score).min().unwrap_or(0);
    let hi = records.iter().map(|r| r.score).max().unwrap_or(0);
    Ok(LikertSummary {
        dimension: first.dimension,
        n: records.len(),
        mean: round2(mean),
        std: round2(std),
        needs_consensus: hi - lo >= threshold,
        consensus_score: None,
    })
}

/// Ratings for one run, grouped for the radar export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarInput {
    pub case_id: String,
    pub model_id: String,
    pub summaries: Vec<LikertSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadarAxis {
    pub case_id: String,
    pub dimension: Dimension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSeries {
    pub model_id: String,
    /// One value per axis; `null` where the cell was not rated.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarDocument {
    pub schema_version: u32,
    pub axes: Vec<RadarAxis>,
    pub series: Vec<RadarSeries>,
}

/// One series per model over every (case, dimension) axis, sorted by id.
/// When several inputs fill the same cell the later one wins.
pub fn radar_export(inputs: &[RadarInput]) -> RadarDocument {
    let cases: BTreeSet<&str> = inputs.iter().map(|i| i.case_id.as_str()).collect();
    let mut cells: BTreeMap<&str, BTreeMap<(&str, Dimension), f64>> = BTreeMap::new();
    for input in inputs {
        let row = cells.entry(input.model_id.as_str()).or_default();
        for s in &input.summaries {
            row.insert((input.case_id.as_str(), s.dimension), s.reported());
        }
    }
    let axes: Vec<RadarAxis> = cases
        .iter()
        .flat_map(|c| Dimension::ALL.into_iter().map(|d| RadarAxis { case_id: c.to_string(), dimension: d }))
        .collect();
    let series = cells
        .into_iter()
        .map(|(model, row)| RadarSeries {
            model_id: model.to_string(),
            values: axes.iter().map(|a| row.get(&(a.case_id.as_str(), a.dimension)).copied()).collect(),
        })
        .collect();
    RadarDocument { schema_version: crate::SCHEMA_VERSION, axes, series }
}

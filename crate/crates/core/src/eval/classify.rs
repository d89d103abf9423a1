use serde::{Deserialize, Deserializer, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{EvalError, Rational};
use crate::case::GoldStandard;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    ExactMatch,
    AlternativeCorrect,
    Imprecise,
    Omission,
    FpWrong,
    FpCorrect,
}

impl Label {
    pub const ALL: [Label; 6] = [
        Label::ExactMatch,
        Label::AlternativeCorrect,
        Label::Imprecise,
        Label::Omission,
        Label::FpWrong,
        Label::FpCorrect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::ExactMatch => "exact_match",
            Label::AlternativeCorrect => "alternative_correct",
            Label::Imprecise => "imprecise",
            Label::Omission => "omission",
            Label::FpWrong => "fp_wrong",
            Label::FpCorrect => "fp_correct",
        }
    }

    /// Labels a gold action may carry.
    pub fn is_gold_label(self) -> bool {
        matches!(self, Label::ExactMatch | Label::AlternativeCorrect | Label::Imprecise | Label::Omission)
    }

    /// Full or half credit.
    pub fn is_credit(self) -> bool {
        matches!(self, Label::ExactMatch | Label::AlternativeCorrect | Label::Imprecise)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a classification is about: a gold action, or an item the system
/// proposed that is not itself a gold action.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Gold(String),
    Other(String),
}

impl Target {
    pub fn id(&self) -> &str {
        match self {
            Target::Gold(id) | Target::Other(id) => id,
        }
    }

    pub fn is_gold(&self) -> bool {
        matches!(self, Target::Gold(_))
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Gold(id) => write!(f, "gold:{id}"),
            Target::Other(id) => write!(f, "other:{id}"),
        }
    }
}

/// One adjudicated judgement.
///
/// An `other` item normally takes `fp_correct` or `fp_wrong`. When a second
/// proposed item matches a gold action that is already credited, it is
/// labeled with the match quality and `gold_ref` names that action; such
/// repeats count as proposed true positives for correctness but never add
/// to completeness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionClassification {
    pub target: Target,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_ref: Option<String>,
    /// The generated text being judged, for `other` targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<String>,
    #[serde(default)]
    pub adjudicator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ActionClassification {
    pub fn gold(action_id: &str, label: Label, adjudicator: &str) -> Self {
        ActionClassification {
            target: Target::Gold(action_id.into()),
            label,
            gold_ref: None,
            item: None,
            adjudicator: adjudicator.into(),
            note: None,
        }
    }

    pub fn other(item_id: &str, label: Label, adjudicator: &str) -> Self {
        ActionClassification { target: Target::Other(item_id.into()), ..Self::gold("", label, adjudicator) }
    }

    pub fn repeat_of(item_id: &str, gold_ref: &str, label: Label, adjudicator: &str) -> Self {
        ActionClassification { gold_ref: Some(gold_ref.into()), ..Self::other(item_id, label, adjudicator) }
    }

    /// Checks the label against the target kind and the gold standard.
    pub fn check(&self, gold: &GoldStandard) -> Result<(), EvalError> {
        if self.adjudicator.trim().is_empty() {
            return Err(EvalError::MissingAdjudicator(self.target.to_string()));
        }
        let invalid = || EvalError::InvalidLabel { target: self.target.to_string(), label: self.label };
        match (&self.target, &self.gold_ref) {
            (Target::Gold(id), None) => {
                if gold.action(id).is_none() {
                    return Err(EvalError::UnknownGoldAction(id.clone()));
                }
                if !self.label.is_gold_label() {
                    return Err(invalid());
                }
            }
            (Target::Gold(_), Some(_)) => return Err(invalid()),
            (Target::Other(_), None) => {
                if !matches!(self.label, Label::FpWrong | Label::FpCorrect) {
                    return Err(invalid());
                }
            }
            (Target::Other(_), Some(reference)) => {
                if gold.action(reference).is_none() {
                    return Err(EvalError::UnknownGoldAction(reference.clone()));
                }
                if !self.label.is_credit() {
                    return Err(invalid());
                }
            }
        }
        Ok(())
    }
}

/// Counts behind correctness and completeness.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ClassificationTally {
    pub exact_or_alt: u32,
    pub imprecise: u32,
    pub omissions: u32,
    pub fp_wrong: u32,
    pub fp_correct: u32,
    /// Proposed items repeating an already-credited gold action.
    #[serde(skip_serializing_if = "is_zero")]
    pub repeat_exact_or_alt: u32,
    #[serde(skip_serializing_if = "is_zero")]
    pub repeat_imprecise: u32,
    pub tp_effective: Rational,
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

impl ClassificationTally {
    pub fn from_counts(exact_or_alt: u32, imprecise: u32, omissions: u32, fp_wrong: u32, fp_correct: u32) -> Self {
        ClassificationTally { exact_or_alt, imprecise, omissions, fp_wrong, fp_correct, ..Default::default() }
            .recomputed()
    }

    fn recomputed(mut self) -> Self {
        self.tp_effective = half_weighted(self.exact_or_alt, self.imprecise);
        self
    }

    /// True positives among proposed items, repeats included.
    pub fn proposed_tp(&self) -> Rational {
        self.tp_effective + half_weighted(self.repeat_exact_or_alt, self.repeat_imprecise)
    }

    pub fn gold_total(&self) -> u32 {
        self.exact_or_alt + self.imprecise + self.omissions
    }
}

impl<'de> Deserialize<'de> for ClassificationTally {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            exact_or_alt: u32,
            imprecise: u32,
            omissions: u32,
            fp_wrong: u32,
            fp_correct: u32,
            #[serde(default)]
            repeat_exact_or_alt: u32,
            #[serde(default)]
            repeat_imprecise: u32,
        }
        let r = Raw::deserialize(d)?;
        Ok(ClassificationTally {
            exact_or_alt: r.exact_or_alt,
            imprecise: r.imprecise,
            omissions: r.omissions,
            fp_wrong: r.fp_wrong,
            fp_correct: r.fp_correct,
            repeat_exact_or_alt: r.repeat_exact_or_alt,
            repeat_imprecise: r.repeat_imprecise,
            tp_effective: Rational::zero(),
        }
        .recomputed())
    }
}

fn half_weighted(full: u32, half: u32) -> Rational {
    Rational::integer(full as i64) + Rational::half() * Rational::integer(half as i64)
}

/// Tallies a complete classification set.
pub fn tally(classifications: &[ActionClassification], gold: &GoldStandard) -> Result<ClassificationTally, EvalError> {
    let (tally, missing) = tally_partial(classifications, gold)?;
    if !missing.is_empty() {
        return Err(EvalError::IncompleteClassification { missing });
    }
    Ok(tally)
}

/// Tallies what has been classified so far, counting unclassified gold
/// actions as omissions. Returns the unclassified ids alongside.
pub fn tally_partial(
    classifications: &[ActionClassification],
    gold: &GoldStandard,
) -> Result<(ClassificationTally, Vec<String>), EvalError> {
    let mut seen = BTreeSet::new();
    let mut gold_labels: BTreeMap<&str, Label> = BTreeMap::new();
    for c in classifications {
        c.check(gold)?;
        if !seen.insert(&c.target) {
            return Err(EvalError::DuplicateClassification(c.target.to_string()));
        }
        if let Target::Gold(id) = &c.target {
            gold_labels.insert(id, c.label);
        }
    }

    let mut t = ClassificationTally::default();
    let mut missing = Vec::new();
    for action in gold.actions() {
        match gold_labels.get(action.action_id.as_str()) {
            Some(Label::ExactMatch | Label::AlternativeCorrect) => t.exact_or_alt += 1,
            Some(Label::Imprecise) => t.imprecise += 1,
            Some(_) => t.omissions += 1,
            None => {
                t.omissions += 1;
                missing.push(action.action_id.clone());
            }
        }
    }
    for c in classifications.iter().filter(|c| !c.target.is_gold()) {
        match (&c.gold_ref, c.label) {
            (None, Label::FpWrong) => t.fp_wrong += 1,
            (None, _) => t.fp_correct += 1,
            (Some(reference), label) => {
                match gold_labels.get(reference.as_str()) {
                    Some(l) if l.is_credit() => {}
                    None if missing.contains(reference) => {}
                    _ => {
                        return Err(EvalError::InconsistentRepeat {
                            item: c.target.id().to_string(),
                            gold_ref: reference.clone(),
                        })
                    }
                }
                if label == Label::Imprecise {
                    t.repeat_imprecise += 1;
                } else {
                    t.repeat_exact_or_alt += 1;
                }
            }
        }
    }
    Ok((t.recomputed(), missing))
}

/// `n/d` with `value` present only when the denominator is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioPair {
    pub numerator: Rational,
    pub denominator: Rational,
    pub value: Option<f64>,
}

impl RatioPair {
    pub fn new(numerator: impl Into<Rational>, denominator: impl Into<Rational>) -> Self {
        let (numerator, denominator) = (numerator.into(), denominator.into());
        let value = (!denominator.is_zero()).then(|| (numerator / denominator).to_f64());
        RatioPair { numerator, denominator, value }
    }

    /// Exact quotient, when defined.
    pub fn exact(&self) -> Option<Rational> {
        (!self.denominator.is_zero()).then(|| self.numerator / self.denominator)
    }
}

impl<'de> Deserialize<'de> for RatioPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            numerator: Rational,
            denominator: Rational,
        }
        let r = Raw::deserialize(d)?;
        Ok(RatioPair::new(r.numerator, r.denominator))
    }
}

impl fmt::Display for RatioPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// Proposed true positives over everything proposed that bears on the gold
/// standard. Imprecise items count half above the line and fully below it;
/// `fp_correct` items are ignored.
pub fn correctness(t: &ClassificationTally) -> RatioPair {
    let proposed = t.exact_or_alt + t.imprecise + t.repeat_exact_or_alt + t.repeat_imprecise + t.fp_wrong;
    RatioPair::new(t.proposed_tp(), Rational::integer(proposed as i64))
}

pub fn completeness(t: &ClassificationTally, gold_action_total: u32) -> Result<RatioPair, EvalError> {
    if t.gold_total() != gold_action_total {
        return Err(EvalError::TotalMismatch { expected: gold_action_total, actual: t.gold_total() });
    }
    Ok(RatioPair::new(t.tp_effective, Rational::integer(gold_action_total as i64)))
}

/// Whether every action of the preferred option set got full credit.
pub fn preferred_included(classifications: &[ActionClassification], gold: &GoldStandard) -> Result<bool, EvalError> {
    let preferred = gold.preferred().ok_or(EvalError::NoPreferredSet)?;
    Ok(preferred.actions.iter().all(|action| {
        classifications.iter().any(|c| {
            c.target == Target::Gold(action.action_id.clone())
                && matches!(c.label, Label::ExactMatch | Label::AlternativeCorrect)
        })
    }))
}

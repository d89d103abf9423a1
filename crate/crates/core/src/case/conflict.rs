use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::{Condition, ConflictLexicon, DrugPair, Prescription};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictKind {
    Ddi,
    Contraindication,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConflictMembers {
    Ddi { drugs: DrugPair },
    Contraindication { drug: String, condition: String },
}

impl ConflictMembers {
    /// `ddi:<a>+<b>` with the pair sorted, or `contra:<drug>@<condition>`.
    pub fn derived_id(&self) -> String {
        match self {
            ConflictMembers::Ddi { drugs } => format!("ddi:{}+{}", drugs.first(), drugs.second()),
            ConflictMembers::Contraindication { drug, condition } => format!("contra:{drug}@{condition}"),
        }
    }
}

/// Identity of a conflict: kind plus its normalized members.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConflictKey {
    pub kind: ConflictKind,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub conflict_id: String,
    #[serde(flatten)]
    pub members: ConflictMembers,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<String>,
    #[serde(default)]
    pub description: String,
}

impl Conflict {
    pub fn ddi(id: impl Into<String>, drugs: DrugPair) -> Self {
        Conflict {
            conflict_id: id.into(),
            members: ConflictMembers::Ddi { drugs },
            severity: None,
            description: String::new(),
        }
    }

    pub fn contraindication(id: impl Into<String>, drug: impl Into<String>, condition: impl Into<String>) -> Self {
        Conflict {
            conflict_id: id.into(),
            members: ConflictMembers::Contraindication { drug: drug.into(), condition: condition.into() },
            severity: None,
            description: String::new(),
        }
    }

    /// Conflict with its id derived from the members, see [`ConflictMembers::derived_id`].
    pub fn from_members(members: ConflictMembers) -> Self {
        Conflict { conflict_id: members.derived_id(), members, severity: None, description: String::new() }
    }

    pub fn kind(&self) -> ConflictKind {
        match self.members {
            ConflictMembers::Ddi { .. } => ConflictKind::Ddi,
            ConflictMembers::Contraindication { .. } => ConflictKind::Contraindication,
        }
    }

    pub fn key(&self) -> ConflictKey {
        let members = match &self.members {
            ConflictMembers::Ddi { drugs } => vec![drugs.first().to_string(), drugs.second().to_string()],
            ConflictMembers::Contraindication { drug, condition } => {
                vec![format!("drug:{drug}"), format!("condition:{condition}")]
            }
        };
        ConflictKey { kind: self.kind(), members }
    }

    /// Drug ids involved in the conflict.
    pub fn drugs(&self) -> Vec<&str> {
        match &self.members {
            ConflictMembers::Ddi { drugs } => vec![drugs.first(), drugs.second()],
            ConflictMembers::Contraindication { drug, .. } => vec![drug.as_str()],
        }
    }

    /// One-line human readable label, e.g. `DDI warfarin + trimethoprim-sulfamethoxazole`.
    pub fn label(&self) -> String {
        match &self.members {
            ConflictMembers::Ddi { drugs } => format!("DDI {} + {}", drugs.first(), drugs.second()),
            ConflictMembers::Contraindication { drug, condition } => {
                format!("contraindication {drug} with {condition}")
            }
        }
    }
}

/// Conflicts deduplicated by identity, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConflictSet {
    conflicts: Vec<Conflict>,
}

impl ConflictSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts unless a conflict with the same identity is present. Returns
    /// whether the conflict was new.
    pub fn insert(&mut self, conflict: Conflict) -> bool {
        let key = conflict.key();
        if self.conflicts.iter().any(|c| c.key() == key) {
            return false;
        }
        self.conflicts.push(conflict);
        true
    }

    pub fn len(&self) -> usize {
        self.conflicts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conflicts.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Conflict> {
        self.conflicts.iter()
    }

    pub fn get(&self, conflict_id: &str) -> Option<&Conflict> {
        self.conflicts.iter().find(|c| c.conflict_id == conflict_id)
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.conflicts.iter().map(|c| c.conflict_id.clone()).collect()
    }

    pub fn count(&self, kind: ConflictKind) -> usize {
        self.conflicts.iter().filter(|c| c.kind() == kind).count()
    }
}

impl FromIterator<Conflict> for ConflictSet {
    fn from_iter<I: IntoIterator<Item = Conflict>>(iter: I) -> Self {
        let mut set = ConflictSet::new();
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl<'a> IntoIterator for &'a ConflictSet {
    type Item = &'a Conflict;
    type IntoIter = std::slice::Iter<'a, Conflict>;

    fn into_iter(self) -> Self::IntoIter {
        self.conflicts.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictCount {
    pub ddi_count: usize,
    pub contraindication_count: usize,
    pub conflicts: ConflictSet,
}

/// Counts lexicon-known conflicts among the plan's active medications.
///
/// Stopped medications are ignored. Matching is exact on canonical ids, so
/// drugs the lexicon does not recognize only participate through pairs that
/// name them verbatim.
pub fn count_conflicts(plan: &Prescription, conditions: &[Condition], lexicon: &ConflictLexicon) -> ConflictCount {
    let active = plan.active_ids();
    let present: BTreeSet<&str> = conditions.iter().map(|c| c.canonical.as_str()).collect();

    let mut conflicts = ConflictSet::new();
    for pair in &lexicon.known_ddis {
        if active.contains(pair.first()) && active.contains(pair.second()) {
            conflicts.insert(Conflict::from_members(ConflictMembers::Ddi { drugs: pair.clone() }));
        }
    }
    for (drug, condition) in &lexicon.known_contraindications {
        if active.contains(drug) && present.contains(condition.as_str()) {
            conflicts.insert(Conflict::from_members(ConflictMembers::Contraindication {
                drug: drug.clone(),
                condition: condition.clone(),
            }));
        }
    }
    ConflictCount {
        ddi_count: conflicts.count(ConflictKind::Ddi),
        contraindication_count: conflicts.count(ConflictKind::Contraindication),
        conflicts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{Medication, MedicationAction};
    use proptest::prelude::*;

    fn med(id: &str, action: MedicationAction) -> Medication {
        Medication {
            canonical: id.into(),
            display_name: id.into(),
            dose: None,
            frequency: None,
            action,
            rationale: None,
            timing: None,
        }
    }

    fn plan(ids: &[&str]) -> Prescription {
        Prescription {
            medications: ids.iter().map(|id| med(id, MedicationAction::Continue)).collect(),
            monitoring: vec![],
        }
    }

    fn condition(name: &str) -> Condition {
        Condition { condition_id: name.into(), name: name.into(), canonical: name.into() }
    }

    fn case1_lexicon() -> ConflictLexicon {
        let mut lex = ConflictLexicon::empty("case1");
        lex.known_contraindications.insert(("aspirin".into(), "duodenal ulcer".into()));
        lex.known_contraindications.insert(("ppi".into(), "osteoporosis".into()));
        lex
    }

    /// Independent oracle: scan every (drug, condition) and drug pair combination.
    fn brute_force(plan: &Prescription, conditions: &[Condition], lex: &ConflictLexicon) -> (usize, usize) {
        let drugs: Vec<&str> = plan
            .medications
            .iter()
            .filter(|m| m.action != MedicationAction::Stop)
            .map(|m| m.canonical.as_str())
            .collect();
        let mut ddi = 0;
        for i in 0..drugs.len() {
            for j in (i + 1)..drugs.len() {
                if lex.known_ddis.iter().any(|p| {
                    (p.first() == drugs[i] && p.second() == drugs[j])
                        || (p.first() == drugs[j] && p.second() == drugs[i])
                }) {
                    ddi += 1;
                }
            }
        }
        let mut ci = 0;
        for d in &drugs {
            for c in conditions {
                if lex.known_contraindications.contains(&(d.to_string(), c.canonical.clone())) {
                    ci += 1;
                }
            }
        }
        (ddi, ci)
    }

    #[test]
    fn empty_plan_has_no_conflicts() {
        let count = count_conflicts(&Prescription::default(), &[condition("duodenal ulcer")], &case1_lexicon());
        assert_eq!((count.ddi_count, count.contraindication_count), (0, 0));
        assert!(count.conflicts.is_empty());
    }

    #[test]
    fn aspirin_with_duodenal_ulcer() {
        let conditions =
            [condition("transient ischemic attack"), condition("duodenal ulcer"), condition("osteoporosis")];
        let p = plan(&["aspirin"]);
        let lex = case1_lexicon();
        let count = count_conflicts(&p, &conditions, &lex);
        assert_eq!(count.contraindication_count, 1);
        assert_eq!(brute_force(&p, &conditions, &lex), (0, 1));
    }

    #[test]
    fn stopped_drugs_are_ignored() {
        let mut p = plan(&["aspirin"]);
        p.medications[0].action = MedicationAction::Stop;
        let count = count_conflicts(&p, &[condition("duodenal ulcer")], &case1_lexicon());
        assert_eq!(count.contraindication_count, 0);
    }

    #[test]
    fn conflict_identity_ignores_pair_order() {
        let a = Conflict::ddi("x", DrugPair::new("warfarin", "bactrim").unwrap());
        let b = Conflict::ddi("y", DrugPair::new("bactrim", "warfarin").unwrap());
        let set: ConflictSet = [a, b].into_iter().collect();
        assert_eq!(set.len(), 1);
    }

    fn lexicon_strategy() -> impl Strategy<Value = ConflictLexicon> {
        let drugs = ["a", "b", "c", "d", "e", "f"];
        let conds = ["x", "y", "z"];
        (
            prop::collection::btree_set((0usize..6, 0usize..6), 0..8),
            prop::collection::btree_set((0usize..6, 0usize..3), 0..6),
        )
            .prop_map(move |(pairs, contra)| {
                let mut lex = ConflictLexicon::empty("random");
                for (i, j) in pairs {
                    if let Ok(p) = DrugPair::new(drugs[i], drugs[j]) {
                        lex.known_ddis.insert(p);
                    }
                }
                for (d, c) in contra {
                    lex.known_contraindications.insert((drugs[d].into(), conds[c].into()));
                }
                lex
            })
    }

    proptest! {
        #[test]
        fn extending_a_plan_never_lowers_counts(
            lex in lexicon_strategy(),
            ids in prop::sample::subsequence(vec!["a", "b", "c", "d", "e"], 0..=5),
        ) {
            let conditions = [condition("x"), condition("y"), condition("z")];
            let base = plan(&ids);
            let before = count_conflicts(&base, &conditions, &lex);
            let mut extended = base.clone();
            extended.medications.push(med("f", MedicationAction::Start));
            let after = count_conflicts(&extended, &conditions, &lex);
            prop_assert!(after.ddi_count >= before.ddi_count);
            prop_assert!(after.contraindication_count >= before.contraindication_count);
            prop_assert_eq!(brute_force(&extended, &conditions, &lex), (after.ddi_count, after.contraindication_count));
        }
    }
}

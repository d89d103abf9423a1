use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::{normalize_drug, normalize_text, ConflictLexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedicationAction {
    Start,
    Continue,
    Stop,
    Replace,
    Adjust,
    Bridge,
}

impl MedicationAction {
    /// Stopped medications are clinically inert for counting and conflict scans.
    pub fn is_active(self) -> bool {
        self != MedicationAction::Stop
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MedicationAction::Start => "start",
            MedicationAction::Continue => "continue",
            MedicationAction::Stop => "stop",
            MedicationAction::Replace => "replace",
            MedicationAction::Adjust => "adjust",
            MedicationAction::Bridge => "bridge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Medication {
    /// Filled from `display_name` when absent in the document.
    #[serde(default)]
    pub canonical: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dose: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<String>,
    pub action: MedicationAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<String>,
}

impl Medication {
    pub fn is_active(&self) -> bool {
        self.action.is_active()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.canonical.trim().is_empty() {
            return Err(format!("medication `{}` has an empty canonical id", self.display_name));
        }
        if self.action == MedicationAction::Replace {
            let has_target = [&self.rationale, &self.timing]
                .iter()
                .any(|field| field.as_deref().is_some_and(|s| !s.trim().is_empty()));
            if !has_target {
                return Err(format!(
                    "medication `{}` is a replacement but records no replacement target in rationale or timing",
                    self.canonical
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prescription {
    pub medications: Vec<Medication>,
    #[serde(default)]
    pub monitoring: Vec<String>,
}

impl Prescription {
    pub fn normalize(&mut self) {
        for med in &mut self.medications {
            let source = if med.canonical.trim().is_empty() { &med.display_name } else { &med.canonical };
            med.canonical = normalize_text(source);
        }
    }

    pub fn canonicalize(&mut self, lexicon: &ConflictLexicon) {
        self.normalize();
        for med in &mut self.medications {
            med.canonical = normalize_drug(&med.canonical, lexicon).0;
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for med in &self.medications {
            med.validate()?;
            if !seen.insert(med.canonical.as_str()) {
                return Err(format!("duplicate medication `{}`", med.canonical));
            }
        }
        Ok(())
    }

    pub fn active(&self) -> impl Iterator<Item = &Medication> {
        self.medications.iter().filter(|m| m.is_active())
    }

    pub fn active_ids(&self) -> BTreeSet<String> {
        self.active().map(|m| m.canonical.clone()).collect()
    }

    pub fn all_ids(&self) -> BTreeSet<String> {
        self.medications.iter().map(|m| m.canonical.clone()).collect()
    }

    pub fn active_count(&self) -> usize {
        self.active().count()
    }

    pub fn get(&self, canonical: &str) -> Option<&Medication> {
        self.medications.iter().find(|m| m.canonical == canonical)
    }
}

/// Medication-level difference between an original and a revised plan.
///
/// `added`, `removed` and `retained` partition the union of canonical ids
/// appearing in either plan: an id is retained when active in both, added when
/// active only in the revised plan, and removed otherwise.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDelta {
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    pub retained: BTreeSet<String>,
    /// Retained ids whose dose, frequency or timing changed, or that were marked `adjust`.
    pub dose_changed: BTreeSet<String>,
    pub original_count: usize,
    pub revised_count: usize,
}

impl PlanDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.dose_changed.is_empty()
    }
}

pub fn diff_plans(original: &Prescription, revised: &Prescription) -> PlanDelta {
    let before = original.active_ids();
    let after = revised.active_ids();
    let universe: BTreeSet<String> = original.all_ids().union(&revised.all_ids()).cloned().collect();

    let mut delta = PlanDelta { original_count: before.len(), revised_count: after.len(), ..PlanDelta::default() };
    for id in universe {
        match (before.contains(&id), after.contains(&id)) {
            (true, true) => {
                let (old, new) = (original.get(&id), revised.get(&id));
                if let (Some(old), Some(new)) = (old, new) {
                    let norm = |v: &Option<String>| v.as_deref().map(normalize_text);
                    if new.action == MedicationAction::Adjust
                        || norm(&old.dose) != norm(&new.dose)
                        || norm(&old.frequency) != norm(&new.frequency)
                        || norm(&old.timing) != norm(&new.timing)
                    {
                        delta.dose_changed.insert(id.clone());
                    }
                }
                delta.retained.insert(id);
            }
            (false, true) => {
                delta.added.insert(id);
            }
            _ => {
                delta.removed.insert(id);
            }
        }
    }
    delta
}

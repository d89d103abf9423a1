use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAction {
    pub action_id: String,
    pub description: String,
    /// Clinically acceptable substitutes, e.g. cangrelor for tirofiban.
    #[serde(default)]
    pub acceptable_alternatives: Vec<String>,
    #[serde(default)]
    pub goal_ids: Vec<String>,
}

/// A collection of non-conflicting management actions forming one acceptable plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionSet {
    pub set_id: String,
    #[serde(default)]
    pub preferred: bool,
    pub actions: Vec<GoldAction>,
    #[serde(default)]
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStandard {
    pub schema_version: u32,
    pub case_id: String,
    pub option_sets: Vec<OptionSet>,
}

impl GoldStandard {
    pub fn validate(&self) -> Result<(), String> {
        if self.option_sets.is_empty() {
            return Err("option_sets must be non-empty".into());
        }
        let preferred = self.option_sets.iter().filter(|s| s.preferred).count();
        if preferred != 1 {
            return Err(format!("exactly one option set must be preferred, found {preferred}"));
        }
        let mut ids = BTreeSet::new();
        for set in &self.option_sets {
            if set.actions.is_empty() {
                return Err(format!("option set `{}` has no actions", set.set_id));
            }
            for action in &set.actions {
                if !ids.insert(action.action_id.as_str()) {
                    return Err(format!("duplicate action_id `{}`", action.action_id));
                }
            }
        }
        Ok(())
    }

    pub fn preferred(&self) -> Option<&OptionSet> {
        self.option_sets.iter().find(|s| s.preferred)
    }

    pub fn actions(&self) -> impl Iterator<Item = &GoldAction> {
        self.option_sets.iter().flat_map(|s| s.actions.iter())
    }

    pub fn action(&self, action_id: &str) -> Option<&GoldAction> {
        self.actions().find(|a| a.action_id == action_id)
    }

    pub fn action_ids(&self) -> Vec<String> {
        self.actions().map(|a| a.action_id.clone()).collect()
    }

    pub fn action_count(&self) -> usize {
        self.actions().count()
    }
}

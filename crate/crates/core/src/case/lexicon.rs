use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet};

use super::normalize_text;

/// An unordered pair of distinct drug ids, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DrugPair(String, String);

impl DrugPair {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Result<Self, String> {
        let (a, b) = (a.into(), b.into());
        if a == b {
            return Err(format!("drug pair members must be distinct, got `{a}` twice"));
        }
        Ok(if a < b { DrugPair(a, b) } else { DrugPair(b, a) })
    }

    pub fn first(&self) -> &str {
        &self.0
    }

    pub fn second(&self) -> &str {
        &self.1
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0 == id || self.1 == id
    }
}

impl Serialize for DrugPair {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [&self.0, &self.1].serialize(s)
    }
}

impl<'de> Deserialize<'de> for DrugPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [a, b] = <[String; 2]>::deserialize(d)?;
        DrugPair::new(normalize_text(&a), normalize_text(&b)).map_err(serde::de::Error::custom)
    }
}

/// Per-case curation of known interactions and drug aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictLexicon {
    pub schema_version: u32,
    pub case_id: String,
    #[serde(default)]
    pub known_ddis: BTreeSet<DrugPair>,
    /// (drug canonical id, condition canonical id)
    #[serde(default)]
    pub known_contraindications: BTreeSet<(String, String)>,
    #[serde(default)]
    pub synonyms: BTreeMap<String, String>,
}

impl ConflictLexicon {
    pub fn empty(case_id: impl Into<String>) -> Self {
        ConflictLexicon {
            schema_version: crate::SCHEMA_VERSION,
            case_id: case_id.into(),
            known_ddis: BTreeSet::new(),
            known_contraindications: BTreeSet::new(),
            synonyms: BTreeMap::new(),
        }
    }

    pub fn normalize(&mut self) {
        self.known_contraindications = std::mem::take(&mut self.known_contraindications)
            .into_iter()
            .map(|(d, c)| (normalize_text(&d), normalize_text(&c)))
            .collect();
        self.synonyms = std::mem::take(&mut self.synonyms)
            .into_iter()
            .map(|(alias, canon)| (normalize_text(&alias), normalize_text(&canon)))
            .collect();
    }

    pub fn validate(&self) -> Result<(), String> {
        for (alias, canon) in &self.synonyms {
            if canon.is_empty() {
                return Err(format!("synonym `{alias}` maps to an empty id"));
            }
            if let Some(next) = self.synonyms.get(canon) {
                if next != canon {
                    return Err(format!("synonym map is not idempotent: `{alias}` -> `{canon}` -> `{next}`"));
                }
            }
        }
        let is_alias = |id: &str| self.synonyms.get(id).is_some_and(|c| c != id);
        for pair in &self.known_ddis {
            for member in [pair.first(), pair.second()] {
                if is_alias(member) {
                    return Err(format!("ddi member `{member}` is an alias, not a canonical id"));
                }
            }
        }
        for (drug, _) in &self.known_contraindications {
            if is_alias(drug) {
                return Err(format!("contraindication drug `{drug}` is an alias, not a canonical id"));
            }
        }
        Ok(())
    }

    /// Every canonical drug id the lexicon knows about.
    pub fn canonical_ids(&self) -> BTreeSet<&str> {
        let mut ids: BTreeSet<&str> = self.synonyms.values().map(String::as_str).collect();
        for pair in &self.known_ddis {
            ids.insert(pair.first());
            ids.insert(pair.second());
        }
        for (drug, _) in &self.known_contraindications {
            ids.insert(drug);
        }
        ids
    }
}

/// Normalizes a drug name to its canonical id.
///
/// Always lowercases and trims; maps aliases through the lexicon. The flag is
/// false when the result is unknown to the lexicon.
pub fn normalize_drug(name: &str, lexicon: &ConflictLexicon) -> (String, bool) {
    let text = normalize_text(name);
    if let Some(canon) = lexicon.synonyms.get(&text) {
        return (canon.clone(), true);
    }
    let recognized = lexicon.canonical_ids().contains(text.as_str());
    (text, recognized)
}

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::{ProposedAction, RoleError, Stance, StatementBlock};
use crate::case::{normalize_drug, ConflictLexicon, MedicationAction};

/// One specialist's contribution to one forum round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialistStatement {
    pub agent_id: String,
    pub round: u32,
    pub position: String,
    pub proposal: Vec<ProposedAction>,
    pub stance: Stance,
}

impl SpecialistStatement {
    pub fn from_block(agent_id: impl Into<String>, round: u32, block: StatementBlock) -> Self {
        SpecialistStatement {
            agent_id: agent_id.into(),
            round,
            position: block.position,
            proposal: block.proposal,
            stance: block.stance,
        }
    }
}

/// An action reduced to what consensus compares: kind and canonical drug ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NormalizedAction {
    pub action: MedicationAction,
    pub drug: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<String>,
}

/// Canonical, sorted, deduplicated form of a proposal. Free-text details are dropped.
pub fn normalize_proposal(proposal: &[ProposedAction], lexicon: &ConflictLexicon) -> BTreeSet<NormalizedAction> {
    proposal
        .iter()
        .map(|a| NormalizedAction {
            action: a.action,
            drug: normalize_drug(&a.drug, lexicon).0,
            replacement: a.replacement.as_deref().map(|r| normalize_drug(r, lexicon).0),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusOutcome {
    pub reached: bool,
    /// The agreed proposal; taken from the first statement so wording is kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<Vec<ProposedAction>>,
}

/// Consensus holds when every statement agrees and all proposals normalize to
/// the same action set. An empty round never reaches consensus.
pub fn detect_consensus(
    statements: &[SpecialistStatement],
    lexicon: &ConflictLexicon,
) -> Result<ConsensusOutcome, RoleError> {
    let rounds: BTreeSet<u32> = statements.iter().map(|s| s.round).collect();
    if rounds.len() > 1 {
        return Err(RoleError::MixedRounds { rounds: rounds.into_iter().collect() });
    }
    let none = ConsensusOutcome { reached: false, proposal: None };
    let Some(first) = statements.iter().min_by(|a, b| a.agent_id.cmp(&b.agent_id)) else {
        return Ok(none);
    };
    if statements.iter().any(|s| s.stance != Stance::Agree || s.proposal.is_empty()) {
        return Ok(none);
    }
    let target = normalize_proposal(&first.proposal, lexicon);
    if statements.iter().all(|s| normalize_proposal(&s.proposal, lexicon) == target) {
        Ok(ConsensusOutcome { reached: true, proposal: Some(first.proposal.clone()) })
    } else {
        Ok(none)
    }
}

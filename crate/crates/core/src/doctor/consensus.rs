//! Proposal selection for the multi-specialist protocol.
//!
//! Proposals are evaluated in descending confidence, ties by roster order.
//! The first whose AGREE count from the other members reaches
//! `ceil(threshold * (n - 1))` is accepted; otherwise the first proposal in
//! evaluation order (the highest confidence) wins.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Proposal, Vote};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsensusError {
    #[error("no proposals to resolve")]
    NoProposals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusRule {
    Threshold,
    MaxConfidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsensusOutcome {
    /// Index into the proposal slice (roster order).
    pub index: usize,
    pub rule: ConsensusRule,
}

/// AGREE votes needed out of `team_size - 1` voters.
pub fn required_agreements(threshold_fraction: f64, team_size: usize) -> usize {
    let voters = team_size.saturating_sub(1) as f64;
    // The epsilon keeps e.g. 0.7 * 10 from rounding up to 8.
    (threshold_fraction * voters - 1e-9).ceil().max(0.0) as usize
}

/// Proposal indices in evaluation order.
pub fn evaluation_order(proposals: &[Proposal]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| proposals[b].confidence.cmp(&proposals[a].confidence).then(a.cmp(&b)));
    order
}

/// `votes` maps a proposal index to the ballots cast on it by other members;
/// proposals absent from the map have no votes.
pub fn resolve_consensus(
    proposals: &[Proposal],
    votes: &BTreeMap<usize, Vec<Vote>>,
    threshold_fraction: f64,
    team_size: usize,
) -> Result<ConsensusOutcome, ConsensusError> {
    let order = evaluation_order(proposals);
    let first = *order.first().ok_or(ConsensusError::NoProposals)?;
    let required = required_agreements(threshold_fraction, team_size);
    for &i in &order {
        let agrees = votes.get(&i).map_or(0, |v| v.iter().filter(|&&x| x == Vote::Agree).count());
        if agrees >= required {
            return Ok(ConsensusOutcome { index: i, rule: ConsensusRule::Threshold });
        }
    }
    Ok(ConsensusOutcome { index: first, rule: ConsensusRule::MaxConfidence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doctor::{ProposalContent, SpecialistIdentity};

    fn p(name: &str, confidence: u8) -> Proposal {
        Proposal {
            specialist: SpecialistIdentity::new(name).unwrap(),
            content: ProposalContent::Question(format!("question from {name}")),
            confidence,
            rationale: String::new(),
        }
    }

    #[test]
    fn required_votes() {
        assert_eq!(required_agreements(0.5, 3), 1);
        assert_eq!(required_agreements(0.5, 4), 2);
        assert_eq!(required_agreements(0.7, 11), 7);
        assert_eq!(required_agreements(1.0, 5), 4);
        assert_eq!(required_agreements(0.5, 1), 0);
    }

    #[test]
    fn half_agreement_accepts_top_proposal() {
        let props = [p("a", 5), p("b", 3), p("c", 2)];
        let votes = BTreeMap::from([(0, vec![Vote::Agree, Vote::Disagree])]);
        let out = resolve_consensus(&props, &votes, 0.5, 3).unwrap();
        assert_eq!(out, ConsensusOutcome { index: 0, rule: ConsensusRule::Threshold });
    }

    #[test]
    fn no_agreement_picks_highest_confidence() {
        let props = [p("a", 2), p("b", 4), p("c", 3)];
        let votes =
            BTreeMap::from([(0, vec![Vote::Disagree; 2]), (1, vec![Vote::Disagree; 2]), (2, vec![Vote::Disagree; 2])]);
        let out = resolve_consensus(&props, &votes, 0.5, 3).unwrap();
        assert_eq!(out, ConsensusOutcome { index: 1, rule: ConsensusRule::MaxConfidence });
    }

    #[test]
    fn lower_confidence_can_win_by_votes() {
        let props = [p("a", 5), p("b", 3)];
        let votes = BTreeMap::from([(0, vec![Vote::Disagree]), (1, vec![Vote::Agree])]);
        assert_eq!(resolve_consensus(&props, &votes, 0.5, 2).unwrap().index, 1);
    }

    #[test]
    fn single_proposal_degenerate() {
        let out = resolve_consensus(&[p("a", 1)], &BTreeMap::new(), 0.5, 1).unwrap();
        assert_eq!(out.index, 0);
    }

    #[test]
    fn ties_broken_by_roster_order() {
        let props = [p("a", 4), p("b", 4)];
        assert_eq!(evaluation_order(&props), vec![0, 1]);
        let out = resolve_consensus(&props, &BTreeMap::new(), 1.0, 2).unwrap();
        assert_eq!(out, ConsensusOutcome { index: 0, rule: ConsensusRule::MaxConfidence });
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(resolve_consensus(&[], &BTreeMap::new(), 0.5, 3), Err(ConsensusError::NoProposals));
    }
}

use serde::{Deserialize, Serialize};

use super::PatchCandidate;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Vote among candidates that passed PoC validation.
    #[default]
    PocVoting,
    /// Vote among every fingerprinted candidate.
    SimpleVoting,
}

impl SelectionStrategy {
    pub fn eligible(self, candidate: &PatchCandidate) -> bool {
        candidate.fingerprint.is_some()
            && match self {
                SelectionStrategy::PocVoting => candidate.poc_pass == Some(true),
                SelectionStrategy::SimpleVoting => true,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteGroup {
    pub fingerprint: String,
    /// Candidate indices, ascending.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub strategy: SelectionStrategy,
    /// Groups ordered by vote: largest first, ties by lowest member index.
    pub groups: Vec<VoteGroup>,
    /// `None` means no patch.
    pub chosen: Option<usize>,
    pub diff: Option<String>,
}

/// Majority vote over fingerprints. The largest group wins, ties go to the
/// group with the lowest candidate index, and the winner's lowest-index
/// member is returned.
pub fn select_patch(candidates: &[PatchCandidate], strategy: SelectionStrategy) -> Selection {
    let mut groups: Vec<VoteGroup> = Vec::new();
    let mut eligible: Vec<&PatchCandidate> = candidates.iter().filter(|c| strategy.eligible(c)).collect();
    eligible.sort_by_key(|c| c.index);
    for c in eligible {
        let fp = c.fingerprint.as_ref().expect("eligible candidates are fingerprinted");
        match groups.iter_mut().find(|g| &g.fingerprint == fp) {
            Some(g) => g.members.push(c.index),
            None => groups.push(VoteGroup { fingerprint: fp.clone(), members: vec![c.index] }),
        }
    }
    groups.sort_by(|a, b| b.members.len().cmp(&a.members.len()).then(a.members[0].cmp(&b.members[0])));
    let chosen = groups.first().map(|g| g.members[0]);
    let diff = chosen.and_then(|i| candidates.iter().find(|c| c.index == i)).and_then(|c| c.diff.clone());
    Selection { strategy, groups, chosen, diff }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(index: usize, fp: &str, pass: bool) -> PatchCandidate {
        PatchCandidate {
            fingerprint: Some(fp.to_string()),
            poc_pass: Some(pass),
            applied: true,
            diff: Some(format!("diff {index}")),
            ..PatchCandidate::empty(index, if index == 0 { 0.0 } else { 1.0 })
        }
    }

    #[test]
    fn majority_and_ties() {
        let c = [cand(0, "B", true), cand(1, "A", true), cand(2, "A", true)];
        assert_eq!(select_patch(&c, SelectionStrategy::PocVoting).chosen, Some(1));
        let c = [cand(0, "A", false), cand(1, "A", false), cand(2, "B", true)];
        assert_eq!(select_patch(&c, SelectionStrategy::PocVoting).chosen, Some(2));
        assert_eq!(select_patch(&c, SelectionStrategy::SimpleVoting).chosen, Some(0));
        let c = [cand(0, "B", true), cand(1, "A", true), cand(2, "A", true), cand(3, "B", true)];
        let s = select_patch(&c, SelectionStrategy::PocVoting);
        assert_eq!(s.chosen, Some(0));
        assert_eq!(s.diff.as_deref(), Some("diff 0"));
        let none = [cand(0, "A", false)];
        assert_eq!(select_patch(&none, SelectionStrategy::PocVoting).chosen, None);
        assert_eq!(select_patch(&[], SelectionStrategy::SimpleVoting).chosen, None);
    }
}

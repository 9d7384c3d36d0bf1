use crate::EnsembleError;

/// Outcome when the positive and negative votes are equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    Inactive,
    Active,
}

/// Mode of the votes.
pub fn majority_vote(votes: &[bool], tie: TieBreak) -> Result<bool, EnsembleError> {
    if votes.is_empty() {
        return Err(EnsembleError::NoVoters);
    }
    let yes = votes.iter().filter(|&&v| v).count();
    let no = votes.len() - yes;
    Ok(match yes.cmp(&no) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => tie == TieBreak::Active,
    })
}

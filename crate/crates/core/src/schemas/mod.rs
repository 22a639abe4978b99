//! Typed model outputs and their strict parsers.
//!
//! Every structured object a model returns (reviews, chairman synthesis,
//! verifier claims) goes through one lenient pre-pass ([`extract`]) and then
//! strict validation against closed enums and score ranges.

mod choice;
pub mod extract;
mod letter;
mod question;
mod review;
mod synthesis;
mod verifier_output;

pub use choice::{extract_choice_letter, ChoiceSource};
pub use letter::{InvalidLetter, Letter};
pub use question::{CandidateAnswer, Gold, McOption, Question, QuestionError, QuestionKind, RoleId};
pub use review::{parse_review, BestBit, Issue, IssueType, Ranking, Review, ReviewError};
pub use synthesis::{
    parse_synthesis, parse_synthesis_flagged, Disagreement, SynthesisError, SynthesisFlags,
    SynthesisOutput,
};
pub use verifier_output::{
    parse_verifier, ClaimEvidence, EvidenceLabel, ExtractedClaim, VerifierError, VerifierOutput,
};

/// Number of candidates shown to reviewers and the verifier.
pub const CANDIDATE_COUNT: usize = 4;

/// Parses an anonymized candidate label, which must be one of `A..=D`.
pub(crate) fn candidate_label(raw: &str) -> Option<Letter> {
    raw.trim()
        .parse::<Letter>()
        .ok()
        .filter(|l| l.index() < CANDIDATE_COUNT)
}

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Letter;
use crate::evalharness::Rubric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    MultipleChoice,
    FreeForm,
    Rubric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOption {
    pub letter: Letter,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gold {
    Letter(Letter),
    Answers(Vec<String>),
    Rubric(Rubric),
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub category: String,
    pub kind: QuestionKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<McOption>,
    pub gold: Gold,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuestionError {
    #[error("question {id}: multiple-choice items need 2..=5 options, got {count}")]
    OptionCount { id: String, count: usize },
    #[error("question {id}: option letters must be A, B, C... in order")]
    OptionLetters { id: String },
    #[error("question {id}: gold letter {gold} is not among the options")]
    GoldNotInOptions { id: String, gold: Letter },
    #[error("question {id}: gold does not match question kind {kind:?}")]
    GoldKindMismatch { id: String, kind: QuestionKind },
    #[error("question {id}: free-form gold answers must be nonempty")]
    EmptyGold { id: String },
    #[error("question {id}: rubric has no checks")]
    EmptyRubric { id: String },
    #[error("question has an empty id")]
    EmptyId,
}

impl Question {
    pub fn is_multiple_choice(&self) -> bool {
        self.kind == QuestionKind::MultipleChoice
    }

    pub fn gold_letter(&self) -> Option<Letter> {
        match self.gold {
            Gold::Letter(l) => Some(l),
            _ => None,
        }
    }

    pub fn option_text(&self, letter: Letter) -> Option<&str> {
        self.options
            .iter()
            .find(|o| o.letter == letter)
            .map(|o| o.text.as_str())
    }

    pub fn validate(&self) -> Result<(), QuestionError> {
        let id = || self.id.clone();
        if self.id.trim().is_empty() {
            return Err(QuestionError::EmptyId);
        }
        match (&self.kind, &self.gold) {
            (QuestionKind::MultipleChoice, Gold::Letter(gold)) => {
                let count = self.options.len();
                if !(2..=5).contains(&count) {
                    return Err(QuestionError::OptionCount { id: id(), count });
                }
                let distinct: BTreeSet<_> = self.options.iter().map(|o| o.letter).collect();
                let prefix = self
                    .options
                    .iter()
                    .enumerate()
                    .all(|(i, o)| o.letter.index() == i);
                if distinct.len() != count || !prefix {
                    return Err(QuestionError::OptionLetters { id: id() });
                }
                if !distinct.contains(gold) {
                    return Err(QuestionError::GoldNotInOptions { id: id(), gold: *gold });
                }
            }
            (QuestionKind::FreeForm, Gold::Answers(answers)) => {
                if answers.is_empty() {
                    return Err(QuestionError::EmptyGold { id: id() });
                }
            }
            (QuestionKind::Rubric, Gold::Rubric(rubric)) => {
                if rubric.checks.is_empty() {
                    return Err(QuestionError::EmptyRubric { id: id() });
                }
            }
            (kind, _) => {
                return Err(QuestionError::GoldKindMismatch { id: id(), kind: *kind });
            }
        }
        Ok(())
    }
}

/// The four Stage-1 roles, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleId {
    Direct,
    EdgeCase,
    StepByStep,
    Pragmatic,
}

impl RoleId {
    pub const ALL: [RoleId; 4] = [
        RoleId::Direct,
        RoleId::EdgeCase,
        RoleId::StepByStep,
        RoleId::Pragmatic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleId::Direct => "direct",
            RoleId::EdgeCase => "edge_case",
            RoleId::StepByStep => "step_by_step",
            RoleId::Pragmatic => "pragmatic",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            RoleId::Direct => "Direct Answerer",
            RoleId::EdgeCase => "Edge Case Finder",
            RoleId::StepByStep => "Step-by-Step Explainer",
            RoleId::Pragmatic => "Pragmatic Implementer",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<RoleId> {
        RoleId::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A Stage-1 output bound to its role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAnswer {
    pub role_id: RoleId,
    pub model_id: String,
    pub text: String,
    pub extracted_choice: Option<Letter>,
    /// Generation failed; `text` is empty.
    #[serde(default)]
    pub failed: bool,
}

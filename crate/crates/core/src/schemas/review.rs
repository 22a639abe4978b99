use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::extract::first_balanced_object;
use super::{candidate_label, Letter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueType {
    FactualRisk,
    MissingEdgeCase,
    Unclear,
    Incomplete,
}

impl IssueType {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueType::FactualRisk => "factual_risk",
            IssueType::MissingEdgeCase => "missing_edge_case",
            IssueType::Unclear => "unclear",
            IssueType::Incomplete => "incomplete",
        }
    }

    pub fn parse(s: &str) -> Option<IssueType> {
        [
            IssueType::FactualRisk,
            IssueType::MissingEdgeCase,
            IssueType::Unclear,
            IssueType::Incomplete,
        ]
        .into_iter()
        .find(|t| t.as_str() == s)
    }
}

impl fmt::Display for IssueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub candidate: Letter,
    pub accuracy: u8,
    pub insight: u8,
    pub clarity: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub candidate: Letter,
    #[serde(rename = "type")]
    pub issue_type: IssueType,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BestBit {
    pub candidate: Letter,
    pub extract: String,
}

/// One reviewer's structured critique over anonymized candidates.
///
/// `rankings` keep the order the reviewer emitted; ordering them is the
/// council's job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub rankings: Vec<Ranking>,
    #[serde(default)]
    pub issues: Vec<Issue>,
    #[serde(default)]
    pub best_bits: Vec<BestBit>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReviewError {
    #[error("review output is empty")]
    Empty,
    #[error("no JSON object found in review output")]
    NoObject,
    #[error("malformed review object: {0}")]
    Malformed(String),
    #[error("candidate label {0:?} is not one of A-D")]
    UnknownCandidate(String),
    #[error("candidate {0} is ranked more than once")]
    DuplicateRanking(Letter),
    #[error("{field} score {value} for candidate {candidate} is outside 1..=10")]
    ScoreOutOfRange {
        candidate: Letter,
        field: &'static str,
        value: i64,
    },
    #[error("unknown issue type {0:?}")]
    UnknownIssueType(String),
}

#[derive(Deserialize)]
struct RawRanking {
    candidate: String,
    accuracy: i64,
    insight: i64,
    clarity: i64,
}

#[derive(Deserialize)]
struct RawIssue {
    candidate: String,
    #[serde(rename = "type")]
    issue_type: String,
    #[serde(default)]
    detail: String,
}

#[derive(Deserialize)]
struct RawBestBit {
    candidate: String,
    #[serde(default)]
    extract: String,
}

#[derive(Deserialize)]
struct RawReview {
    rankings: Vec<RawRanking>,
    #[serde(default)]
    issues: Vec<RawIssue>,
    #[serde(default)]
    best_bits: Vec<RawBestBit>,
}

fn label(raw: &str) -> Result<Letter, ReviewError> {
    candidate_label(raw).ok_or_else(|| ReviewError::UnknownCandidate(raw.to_string()))
}

fn score(candidate: Letter, field: &'static str, value: i64) -> Result<u8, ReviewError> {
    if (1..=10).contains(&value) {
        Ok(value as u8)
    } else {
        Err(ReviewError::ScoreOutOfRange { candidate, field, value })
    }
}

pub fn parse_review(raw_text: &str) -> Result<Review, ReviewError> {
    if raw_text.trim().is_empty() {
        return Err(ReviewError::Empty);
    }
    let object = first_balanced_object(raw_text).ok_or(ReviewError::NoObject)?;
    let raw: RawReview =
        serde_json::from_str(object).map_err(|e| ReviewError::Malformed(e.to_string()))?;

    let mut seen = BTreeSet::new();
    let mut rankings = Vec::with_capacity(raw.rankings.len());
    for r in &raw.rankings {
        let candidate = label(&r.candidate)?;
        if !seen.insert(candidate) {
            return Err(ReviewError::DuplicateRanking(candidate));
        }
        rankings.push(Ranking {
            candidate,
            accuracy: score(candidate, "accuracy", r.accuracy)?,
            insight: score(candidate, "insight", r.insight)?,
            clarity: score(candidate, "clarity", r.clarity)?,
        });
    }

    let issues = raw
        .issues
        .iter()
        .map(|i| {
            Ok(Issue {
                candidate: label(&i.candidate)?,
                issue_type: IssueType::parse(&i.issue_type)
                    .ok_or_else(|| ReviewError::UnknownIssueType(i.issue_type.clone()))?,
                detail: i.detail.clone(),
            })
        })
        .collect::<Result<Vec<_>, ReviewError>>()?;

    let best_bits = raw
        .best_bits
        .iter()
        .map(|b| {
            Ok(BestBit {
                candidate: label(&b.candidate)?,
                extract: b.extract.clone(),
            })
        })
        .collect::<Result<Vec<_>, ReviewError>>()?;

    Ok(Review { rankings, issues, best_bits })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE_REVIEW: &str = r#"{
  "rankings": [
    {"candidate": "A", "accuracy": 8, "insight": 7, "clarity": 9},
    {"candidate": "C", "accuracy": 7, "insight": 8, "clarity": 7},
    {"candidate": "B", "accuracy": 6, "insight": 5, "clarity": 6},
    {"candidate": "D", "accuracy": 5, "insight": 6, "clarity": 5}
  ],
  "issues": [
    {"candidate": "B", "type": "factual_risk", "detail": "Likely incorrect claim about X; conflicts with Y."},
    {"candidate": "D", "type": "unclear", "detail": "Ambiguous wording; unclear which option is selected."}
  ],
  "best_bits": [
    {"candidate": "C", "extract": "Concise elimination of distractors; good justification for the final choice."}
  ]
}"#;

    #[test]
    fn parses_reference_review() {
        let review = parse_review(EXAMPLE_REVIEW).unwrap();
        assert_eq!(review.rankings.len(), 4);
        assert_eq!(review.issues.len(), 2);
        assert_eq!(review.best_bits.len(), 1);
        // input order is preserved
        let order: Vec<_> = review.rankings.iter().map(|r| r.candidate).collect();
        assert_eq!(order, vec![Letter::A, Letter::C, Letter::B, Letter::D]);
        assert_eq!(review.issues[0].issue_type, IssueType::FactualRisk);
    }

    #[test]
    fn fenced_review_is_identical() {
        let fenced = format!("```json\n{EXAMPLE_REVIEW}\n```");
        assert_eq!(parse_review(&fenced).unwrap(), parse_review(EXAMPLE_REVIEW).unwrap());
    }

    #[test]
    fn unknown_issue_type() {
        let raw = r#"{"rankings":[],"issues":[{"candidate":"A","type":"style_nit","detail":""}]}"#;
        assert_eq!(
            parse_review(raw),
            Err(ReviewError::UnknownIssueType("style_nit".into()))
        );
    }

    #[test]
    fn score_out_of_range() {
        let raw = r#"{"rankings":[{"candidate":"A","accuracy":11,"insight":1,"clarity":1}]}"#;
        assert!(matches!(
            parse_review(raw),
            Err(ReviewError::ScoreOutOfRange { field: "accuracy", value: 11, .. })
        ));
        let raw = r#"{"rankings":[{"candidate":"A","accuracy":5,"insight":0,"clarity":1}]}"#;
        assert!(matches!(
            parse_review(raw),
            Err(ReviewError::ScoreOutOfRange { field: "insight", .. })
        ));
    }

    #[test]
    fn other_errors() {
        assert_eq!(parse_review("   "), Err(ReviewError::Empty));
        assert_eq!(parse_review("I think A is best."), Err(ReviewError::NoObject));
        assert!(matches!(parse_review("{\"issues\": []}"), Err(ReviewError::Malformed(_))));
        let raw = r#"{"rankings":[{"candidate":"E","accuracy":5,"insight":5,"clarity":5}]}"#;
        assert_eq!(parse_review(raw), Err(ReviewError::UnknownCandidate("E".into())));
        let raw = r#"{"rankings":[
            {"candidate":"A","accuracy":5,"insight":5,"clarity":5},
            {"candidate":"A","accuracy":6,"insight":5,"clarity":5}]}"#;
        assert_eq!(parse_review(raw), Err(ReviewError::DuplicateRanking(Letter::A)));
    }

    #[test]
    fn missing_candidate_is_accepted() {
        let raw = r#"{"rankings":[{"candidate":"B","accuracy":5,"insight":5,"clarity":5}]}"#;
        let review = parse_review(raw).unwrap();
        assert_eq!(review.rankings.len(), 1);
        assert!(review.issues.is_empty());
    }
}

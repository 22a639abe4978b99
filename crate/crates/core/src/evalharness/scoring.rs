use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::schemas::Letter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    #[default]
    All,
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RubricCheck {
    /// Normalized answer equals one of the targets.
    ExactMatch { targets: Vec<String> },
    /// First number in the answer is within `abs_tol` of `target`.
    NumericTolerance { target: f64, abs_tol: f64 },
    /// Every keyword appears (case-insensitive substring).
    KeywordRequired { keywords: Vec<String> },
    /// No keyword appears (case-insensitive substring).
    KeywordForbidden { keywords: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rubric {
    #[serde(default)]
    pub combine: Combine,
    pub checks: Vec<RubricCheck>,
}

pub fn score_mc1(system_output: Option<Letter>, gold: Letter) -> bool {
    system_output == Some(gold)
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercase, drop punctuation, drop one leading article, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let mut words = no_punct.split_whitespace().peekable();
    if words.peek().is_some_and(|w| ARTICLES.contains(w)) {
        words.next();
    }
    words.collect::<Vec<_>>().join(" ")
}

pub fn score_em(answer: &str, golds: &[String]) -> bool {
    let normalized = normalize_answer(answer);
    golds.iter().any(|g| normalize_answer(g) == normalized)
}

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"-?(?:\d[\d,]*(?:\.\d+)?|\.\d+)").unwrap());

/// First number appearing in `text`; thousands separators are ignored.
pub fn first_number(text: &str) -> Option<f64> {
    NUMBER
        .find(text)
        .and_then(|m| m.as_str().replace(',', "").parse().ok())
}

fn contains_ci(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

impl RubricCheck {
    pub fn passes(&self, answer: &str) -> bool {
        match self {
            RubricCheck::ExactMatch { targets } => score_em(answer, targets),
            RubricCheck::NumericTolerance { target, abs_tol } => {
                first_number(answer).is_some_and(|x| (x - target).abs() <= *abs_tol)
            }
            RubricCheck::KeywordRequired { keywords } => keywords.iter().all(|k| contains_ci(answer, k)),
            RubricCheck::KeywordForbidden { keywords } => !keywords.iter().any(|k| contains_ci(answer, k)),
        }
    }
}

/// An empty answer never satisfies a rubric, even one made only of
/// forbidden-keyword checks.
pub fn score_rubric(answer: &str, rubric: &Rubric) -> bool {
    if answer.trim().is_empty() || rubric.checks.is_empty() {
        return false;
    }
    match rubric.combine {
        Combine::All => rubric.checks.iter().all(|c| c.passes(answer)),
        Combine::Any => rubric.checks.iter().any(|c| c.passes(answer)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mc1() {
        assert!(score_mc1(Some(Letter::B), Letter::B));
        assert!(!score_mc1(None, Letter::B));
        assert!(!score_mc1(Some(Letter::A), Letter::B));
    }

    #[test]
    fn em_normalization() {
        assert_eq!(normalize_answer("The Eiffel Tower."), "eiffel tower");
        assert!(score_em("The Eiffel Tower.", &["eiffel tower".into()]));
        assert!(score_em("Paris", &["Paris".into()]));
        assert!(!score_em("London", &["Paris".into()]));
        assert_eq!(normalize_answer("  An   apple,  a day "), "apple a day");
    }

    #[test]
    fn numbers() {
        assert_eq!(first_number("$0.05"), Some(0.05));
        assert_eq!(first_number("about 1,200 neurons"), Some(1200.0));
        assert_eq!(first_number("takes 24-72 hours"), Some(24.0));
        assert_eq!(first_number("no digits"), None);
    }

    #[test]
    fn bat_and_ball() {
        let rubric = Rubric {
            combine: Combine::All,
            checks: vec![RubricCheck::NumericTolerance { target: 0.05, abs_tol: 0.001 }],
        };
        assert!(score_rubric("$0.05", &rubric));
        assert!(!score_rubric("The ball costs $0.10", &rubric));
        assert!(!score_rubric("five cents", &rubric));
    }

    #[test]
    fn forbidden_myth() {
        let rubric = Rubric {
            combine: Combine::All,
            checks: vec![RubricCheck::KeywordForbidden { keywords: vec!["7 years".into()] }],
        };
        assert!(!score_rubric("Gum stays in your stomach for 7 years.", &rubric));
        assert!(score_rubric("Digestion takes roughly 24 to 72 hours.", &rubric));
    }

    #[test]
    fn combine_modes_and_empty() {
        let checks = vec![
            RubricCheck::KeywordRequired { keywords: vec!["no smoke".into()] },
            RubricCheck::ExactMatch { targets: vec!["none".into()] },
        ];
        let all = Rubric { combine: Combine::All, checks: checks.clone() };
        let any = Rubric { combine: Combine::Any, checks };
        assert!(!score_rubric("Electric trains produce No Smoke.", &all));
        assert!(score_rubric("Electric trains produce No Smoke.", &any));
        assert!(!score_rubric("", &all));
        assert!(!score_rubric("   ", &any));
    }

    #[test]
    fn rubric_json_shape() {
        let raw = r#"{"combine":"any","checks":[{"type":"numeric_tolerance","target":0.05,"abs_tol":0.001},{"type":"keyword_forbidden","keywords":["7 years"]}]}"#;
        let rubric: Rubric = serde_json::from_str(raw).unwrap();
        assert_eq!(rubric.combine, Combine::Any);
        assert_eq!(rubric.checks.len(), 2);
    }
}

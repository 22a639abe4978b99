use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::extract::first_balanced_object;
use super::{extract_choice_letter, ChoiceSource, Letter};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub topic: String,
    #[serde(default)]
    pub positions: Vec<String>,
    #[serde(default)]
    pub resolution: String,
}

/// The chairman's structured output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisOutput {
    pub choice: Option<Letter>,
    pub final_answer: String,
    #[serde(default)]
    pub rationale: Vec<String>,
    #[serde(default)]
    pub open_questions: Vec<String>,
    #[serde(default)]
    pub disagreements: Vec<Disagreement>,
}

/// Normalizations applied while parsing, kept for the trace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisFlags {
    /// `"choice": "null"` (a string) was read as JSON null.
    pub null_string_choice: bool,
    /// A free-form synthesis carried a non-null choice, which was dropped.
    pub dropped_choice: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthesisError {
    #[error("no JSON object found in chairman output")]
    NoObject,
    #[error("malformed chairman object: {0}")]
    Malformed(String),
    #[error("missing required key {0:?}")]
    MissingKey(&'static str),
    #[error("choice {0:?} is not exactly one letter A-E")]
    InvalidChoice(String),
    #[error("free-form synthesis has an empty final_answer")]
    EmptyFinalAnswer,
}

fn string_list(obj: &serde_json::Map<String, Value>, key: &str) -> Result<Vec<String>, SynthesisError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| SynthesisError::Malformed(format!("{key}: {e}"))),
    }
}

/// Parses the chairman output. `multiple_choice` selects the context: in MC
/// context a single-letter `choice` is mandatory; in free-form context a
/// nonempty `final_answer` is.
pub fn parse_synthesis(raw_text: &str, multiple_choice: bool) -> Result<SynthesisOutput, SynthesisError> {
    parse_synthesis_flagged(raw_text, multiple_choice).map(|(out, _)| out)
}

pub fn parse_synthesis_flagged(
    raw_text: &str,
    multiple_choice: bool,
) -> Result<(SynthesisOutput, SynthesisFlags), SynthesisError> {
    let object = first_balanced_object(raw_text).ok_or(SynthesisError::NoObject)?;
    let value: Value =
        serde_json::from_str(object).map_err(|e| SynthesisError::Malformed(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(SynthesisError::Malformed("not an object".into()));
    };
    let mut flags = SynthesisFlags::default();

    let raw_choice = match obj.get("choice") {
        None => None,
        Some(Value::Null) => Some(None),
        Some(Value::String(s)) => {
            if s.trim().eq_ignore_ascii_case("null") {
                flags.null_string_choice = true;
                Some(None)
            } else {
                Some(Some(s.clone()))
            }
        }
        Some(other) => return Err(SynthesisError::InvalidChoice(other.to_string())),
    };

    let final_answer = match obj.get("final_answer") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => {
            return Err(SynthesisError::Malformed(format!("final_answer is not a string: {other}")))
        }
    };

    let choice = if multiple_choice {
        let text = raw_choice
            .ok_or(SynthesisError::MissingKey("choice"))?
            .ok_or(SynthesisError::MissingKey("choice"))?;
        Some(
            extract_choice_letter(ChoiceSource::Field(Some(&text)))
                .ok_or(SynthesisError::InvalidChoice(text))?,
        )
    } else {
        if matches!(raw_choice, Some(Some(_))) {
            flags.dropped_choice = true;
        }
        None
    };

    let final_answer = if multiple_choice {
        final_answer.unwrap_or_default()
    } else {
        let answer = final_answer.ok_or(SynthesisError::MissingKey("final_answer"))?;
        if answer.trim().is_empty() {
            return Err(SynthesisError::EmptyFinalAnswer);
        }
        answer
    };

    let disagreements = match obj.get("disagreements") {
        None | Some(Value::Null) => Vec::new(),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| SynthesisError::Malformed(format!("disagreements: {e}")))?,
    };

    Ok((
        SynthesisOutput {
            choice,
            final_answer,
            rationale: string_list(&obj, "rationale")?,
            open_questions: string_list(&obj, "open_questions")?,
            disagreements,
        },
        flags,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mc_choice() {
        let raw = r#"{"choice":"C","final_answer":"","rationale":[],"open_questions":[],"disagreements":[]}"#;
        let out = parse_synthesis(raw, true).unwrap();
        assert_eq!(out.choice, Some(Letter::C));
    }

    #[test]
    fn free_form_null_choice() {
        let raw = r#"{"choice":null,"final_answer":"Seasons on Earth are caused by the planet's axial tilt."}"#;
        let out = parse_synthesis(raw, false).unwrap();
        assert_eq!(out.choice, None);
        assert!(out.final_answer.starts_with("Seasons on Earth"));
    }

    #[test]
    fn multi_letter_choice_is_an_error() {
        let raw = r#"{"choice":"A or B","final_answer":""}"#;
        assert_eq!(
            parse_synthesis(raw, true),
            Err(SynthesisError::InvalidChoice("A or B".into()))
        );
        let raw = r#"{"choice":"A|B|C|D|E|null","final_answer":""}"#;
        assert!(matches!(parse_synthesis(raw, true), Err(SynthesisError::InvalidChoice(_))));
    }

    #[test]
    fn missing_or_null_choice_in_mc() {
        assert_eq!(
            parse_synthesis(r#"{"final_answer":"x"}"#, true),
            Err(SynthesisError::MissingKey("choice"))
        );
        assert_eq!(
            parse_synthesis(r#"{"choice":null,"final_answer":"x"}"#, true),
            Err(SynthesisError::MissingKey("choice"))
        );
    }

    #[test]
    fn string_null_is_normalized_and_flagged() {
        let (out, flags) =
            parse_synthesis_flagged(r#"{"choice":"null","final_answer":"An answer."}"#, false).unwrap();
        assert_eq!(out.choice, None);
        assert!(flags.null_string_choice);
    }

    #[test]
    fn free_form_requires_answer() {
        assert_eq!(
            parse_synthesis(r#"{"choice":null}"#, false),
            Err(SynthesisError::MissingKey("final_answer"))
        );
        assert_eq!(
            parse_synthesis(r#"{"choice":null,"final_answer":"  "}"#, false),
            Err(SynthesisError::EmptyFinalAnswer)
        );
    }

    #[test]
    fn prose_is_no_object() {
        assert_eq!(parse_synthesis("The answer is C.", true), Err(SynthesisError::NoObject));
    }

    #[test]
    fn disagreements_parse() {
        let raw = r#"{"choice":null,"final_answer":"x","disagreements":[{"topic":"t","positions":["a","b"],"resolution":"r"}]}"#;
        let out = parse_synthesis(raw, false).unwrap();
        assert_eq!(out.disagreements[0].positions.len(), 2);
    }
}

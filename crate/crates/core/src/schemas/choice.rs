use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use super::Letter;

/// Where a multiple-choice answer is read from.
#[derive(Debug, Clone, Copy)]
pub enum ChoiceSource<'a> {
    /// The chairman's structured `choice` field (already parsed as a string).
    Field(Option<&'a str>),
    /// Free model text that designates its answer with a `FINAL: <LETTER>` line.
    Text(&'a str),
}

static FINAL_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bFINAL\s*(?:ANSWER)?\s*:(.*)$").unwrap());

/// A lone letter, optionally wrapped in parens/brackets/quotes/bold and
/// followed by a period.
static LONE_LETTER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^[\s*_"'`]*[\(\[]?\s*([A-Ea-e])\s*[\)\]]?\.?[\s*_"'`]*$"#).unwrap()
});

fn lone_letter(s: &str) -> Option<Letter> {
    LONE_LETTER
        .captures(s)
        .and_then(|c| c[1].chars().next())
        .and_then(Letter::from_char)
}

/// Returns the designated letter iff exactly one unambiguous letter is
/// designated; `None` otherwise (callers score `None` as incorrect).
pub fn extract_choice_letter(source: ChoiceSource<'_>) -> Option<Letter> {
    match source {
        ChoiceSource::Field(None) => None,
        ChoiceSource::Field(Some(value)) => {
            if value.trim().eq_ignore_ascii_case("null") {
                return None;
            }
            lone_letter(value)
        }
        ChoiceSource::Text(text) => {
            let mut designated = BTreeSet::new();
            let mut saw_final = false;
            for line in text.lines() {
                let Some(caps) = FINAL_LINE.captures(line) else {
                    continue;
                };
                saw_final = true;
                // A FINAL line that is not a lone letter ("A or B") is ambiguous.
                designated.insert(lone_letter(&caps[1])?);
            }
            if !saw_final {
                return lone_letter(text.trim());
            }
            if designated.len() == 1 {
                designated.into_iter().next()
            } else {
                None
            }
        }
    }
}

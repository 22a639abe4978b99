use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Rubric;
use crate::schemas::{Gold, Letter, McOption, Question, QuestionError, QuestionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    Mc1,
    FreeEm,
    Rubric,
}

impl BenchmarkKind {
    pub fn question_kind(self) -> QuestionKind {
        match self {
            BenchmarkKind::Mc1 => QuestionKind::MultipleChoice,
            BenchmarkKind::FreeEm => QuestionKind::FreeForm,
            BenchmarkKind::Rubric => QuestionKind::Rubric,
        }
    }
}

/// Which items were evaluated, for exact reproduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub seed: Option<u64>,
    pub source_split: Option<String>,
    pub item_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSet {
    pub name: String,
    pub kind: BenchmarkKind,
    pub items: Vec<Question>,
    pub sample_manifest: SampleManifest,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error("reading benchmark: {0}")]
    Io(#[from] std::io::Error),
    #[error("benchmark line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("benchmark line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("benchmark line {line}: question {id}: gold letter {gold:?} is not among the options")]
    InvalidGold { line: usize, id: String, gold: String },
    #[error("benchmark line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: QuestionError,
    },
    #[error("cannot tell the benchmark kind from its first record")]
    UnknownKind,
}

#[derive(Deserialize)]
struct RawOption {
    letter: String,
    text: String,
}

#[derive(Deserialize)]
struct RawItem {
    id: String,
    #[serde(default)]
    category: String,
    question: String,
    #[serde(default)]
    options: Vec<RawOption>,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    answers: Option<Vec<String>>,
    #[serde(default)]
    rubric: Option<Rubric>,
}

fn parse_line(line: usize, text: &str, kind: BenchmarkKind) -> Result<Question, BenchmarkError> {
    let parse_err = |message: String| BenchmarkError::Parse { line, message };
    let raw: RawItem = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let category = if raw.category.is_empty() { "uncategorized".to_string() } else { raw.category };
    let (options, gold) = match kind {
        BenchmarkKind::Mc1 => {
            let options = raw
                .options
                .iter()
                .map(|o| {
                    o.letter
                        .trim()
                        .parse::<Letter>()
                        .map(|letter| McOption { letter, text: o.text.clone() })
                        .map_err(|e| parse_err(e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let answer = raw.answer.ok_or_else(|| parse_err("missing \"answer\"".into()))?;
            let gold = answer.trim().parse::<Letter>().map_err(|_| BenchmarkError::InvalidGold {
                line,
                id: raw.id.clone(),
                gold: answer.clone(),
            })?;
            if !options.iter().any(|o| o.letter == gold) {
                return Err(BenchmarkError::InvalidGold { line, id: raw.id, gold: answer });
            }
            (options, Gold::Letter(gold))
        }
        BenchmarkKind::FreeEm => {
            let answers = raw.answers.ok_or_else(|| parse_err("missing \"answers\"".into()))?;
            (Vec::new(), Gold::Answers(answers))
        }
        BenchmarkKind::Rubric => {
            let rubric = raw.rubric.ok_or_else(|| parse_err("missing \"rubric\"".into()))?;
            (Vec::new(), Gold::Rubric(rubric))
        }
    };
    let question = Question {
        id: raw.id,
        category,
        kind: kind.question_kind(),
        text: raw.question,
        options,
        gold,
    };
    question
        .validate()
        .map_err(|source| BenchmarkError::Invalid { line, source })?;
    Ok(question)
}

/// Guesses the kind from the keys of the first record.
pub fn detect_kind(first_line: &str) -> Result<BenchmarkKind, BenchmarkError> {
    let value: serde_json::Value =
        serde_json::from_str(first_line).map_err(|e| BenchmarkError::Parse { line: 1, message: e.to_string() })?;
    if value.get("options").is_some() {
        Ok(BenchmarkKind::Mc1)
    } else if value.get("rubric").is_some() {
        Ok(BenchmarkKind::Rubric)
    } else if value.get("answers").is_some() {
        Ok(BenchmarkKind::FreeEm)
    } else {
        Err(BenchmarkError::UnknownKind)
    }
}

pub fn read_benchmark(
    name: &str,
    reader: impl Read,
    kind: Option<BenchmarkKind>,
) -> Result<BenchmarkSet, BenchmarkError> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    let mut kind = kind;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let k = match kind {
            Some(k) => k,
            None => *kind.insert(detect_kind(&line)?),
        };
        let q = parse_line(i + 1, &line, k)?;
        if !seen.insert(q.id.clone()) {
            return Err(BenchmarkError::DuplicateId { line: i + 1, id: q.id });
        }
        items.push(q);
    }
    let item_ids = items.iter().map(|q| q.id.clone()).collect();
    Ok(BenchmarkSet {
        name: name.to_string(),
        kind: kind.unwrap_or(BenchmarkKind::Mc1),
        items,
        sample_manifest: SampleManifest { seed: None, source_split: None, item_ids },
    })
}

/// Loads a newline-delimited benchmark file. With `kind = None` the kind is
/// detected from the first record.
pub fn load_benchmark(path: impl AsRef<Path>, kind: Option<BenchmarkKind>) -> Result<BenchmarkSet, BenchmarkError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "benchmark".into());
    read_benchmark(&name, std::fs::File::open(path)?, kind)
}

/// Writes `set` in the newline-delimited format [`read_benchmark`] accepts.
pub fn write_benchmark(mut writer: impl Write, set: &BenchmarkSet) -> std::io::Result<()> {
    for q in &set.items {
        let mut line = serde_json::json!({ "id": q.id, "category": q.category, "question": q.text });
        match &q.gold {
            Gold::Letter(l) => {
                line["options"] = q
                    .options
                    .iter()
                    .map(|o| serde_json::json!({ "letter": o.letter, "text": o.text }))
                    .collect();
                line["answer"] = serde_json::json!(l);
            }
            Gold::Answers(a) => line["answers"] = serde_json::json!(a),
            Gold::Rubric(r) => line["rubric"] = serde_json::to_value(r)?,
        }
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc_line(id: &str, answer: &str) -> String {
        format!(
            r#"{{"id":"{id}","category":"Misconceptions","question":"Q?","options":[{{"letter":"A","text":"x"}},{{"letter":"B","text":"y"}},{{"letter":"C","text":"z"}}],"answer":"{answer}"}}"#
        )
    }

    #[test]
    fn three_mc_items() {
        let text = [mc_line("q1", "A"), mc_line("q2", "B"), mc_line("q3", "C")].join("\n");
        let set = read_benchmark("t", text.as_bytes(), Some(BenchmarkKind::Mc1)).unwrap();
        assert_eq!(set.items.len(), 3);
        assert_eq!(set.sample_manifest.item_ids, vec!["q1", "q2", "q3"]);
        assert_eq!(set.items[1].gold_letter(), Some(Letter::B));
        // detection gives the same result
        let detected = read_benchmark("t", text.as_bytes(), None).unwrap();
        assert_eq!(detected.kind, BenchmarkKind::Mc1);
    }

    #[test]
    fn gold_out_of_range() {
        let err = read_benchmark("t", mc_line("q1", "F").as_bytes(), Some(BenchmarkKind::Mc1)).unwrap_err();
        assert!(matches!(err, BenchmarkError::InvalidGold { line: 1, .. }), "{err}");
        let err = read_benchmark("t", mc_line("q1", "D").as_bytes(), Some(BenchmarkKind::Mc1)).unwrap_err();
        assert!(matches!(err, BenchmarkError::InvalidGold { .. }));
    }

    #[test]
    fn duplicate_ids() {
        let text = [mc_line("q1", "A"), mc_line("q1", "B")].join("\n");
        assert!(matches!(
            read_benchmark("t", text.as_bytes(), None),
            Err(BenchmarkError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn free_form_and_rubric() {
        let free = r#"{"id":"n1","category":"nq","question":"Tallest tower in Paris?","answers":["Eiffel Tower"]}"#;
        let set = read_benchmark("nq", free.as_bytes(), None).unwrap();
        assert_eq!(set.kind, BenchmarkKind::FreeEm);
        let rubric = r#"{"id":"e1","category":"puzzle","question":"Bat and ball?","rubric":{"combine":"all","checks":[{"type":"numeric_tolerance","target":0.05,"abs_tol":0.001}]}}"#;
        let set = read_benchmark("ec", rubric.as_bytes(), None).unwrap();
        assert_eq!(set.kind, BenchmarkKind::Rubric);
        let empty_rubric = r#"{"id":"e1","question":"?","rubric":{"checks":[]}}"#;
        assert!(matches!(
            read_benchmark("ec", empty_rubric.as_bytes(), None),
            Err(BenchmarkError::Invalid { .. })
        ));
    }

    #[test]
    fn many_items_manifest() {
        let text: Vec<String> = (0..817).map(|i| mc_line(&format!("tqa-{i}"), "A")).collect();
        let set = read_benchmark("truthfulqa", text.join("\n").as_bytes(), None).unwrap();
        assert_eq!(set.sample_manifest.item_ids.len(), 817);
    }
}

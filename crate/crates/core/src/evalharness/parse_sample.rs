//! Blind sample of multiple-choice parses for manual checking. The sample
//! shows only raw outputs and the required format; the key linking each entry
//! back to its method, question and extracted letter is kept separately.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MethodResult;
use crate::council::SystemOutput;
use crate::schemas::Letter;

pub const PARSE_SAMPLE_SIZE: usize = 50;

pub const REQUIRED_FORMAT: &str =
    "exactly one letter A-E, designated by a `FINAL: <LETTER>` line or the JSON `choice` field";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindSample {
    pub sample_id: String,
    pub raw_outputs: Vec<String>,
    pub required_format: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleKey {
    pub sample_id: String,
    pub method: String,
    pub question_id: String,
    pub extracted: Option<Letter>,
}

/// Draws up to `n` multiple-choice records with raw outputs, uniformly over
/// all methods, in an order that does not reveal the method.
pub fn parse_sample(results: &[MethodResult], n: usize, seed: u64) -> (Vec<BlindSample>, Vec<SampleKey>) {
    let mut pool: Vec<_> = results
        .iter()
        .flat_map(|r| r.records.iter())
        .filter_map(|rec| match rec.system_output {
            SystemOutput::Choice(letter) if !rec.raw_outputs.is_empty() => Some((rec, letter)),
            _ => None,
        })
        .collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    pool.truncate(n);
    pool.into_iter()
        .enumerate()
        .map(|(i, (rec, extracted))| {
            let sample_id = format!("p{:03}", i + 1);
            (
                BlindSample {
                    sample_id: sample_id.clone(),
                    raw_outputs: rec.raw_outputs.clone(),
                    required_format: REQUIRED_FORMAT.into(),
                },
                SampleKey { sample_id, method: rec.method.clone(), question_id: rec.question_id.clone(), extracted },
            )
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::QueryUsage;
    use crate::evalharness::QuestionRecord;

    fn record(method: &str, q: usize, output: SystemOutput, raw: &[&str]) -> QuestionRecord {
        QuestionRecord {
            method: method.into(),
            question_id: format!("q{q}"),
            category: "c".into(),
            correct: false,
            system_output: output,
            usage: QueryUsage::default(),
            all_consistent: None,
            claim_tags: None,
            flags: vec![],
            raw_outputs: raw.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn sample_is_blind_seeded_and_bounded() {
        let results: Vec<MethodResult> = ["EJ-Full", "S1"]
            .iter()
            .map(|m| {
                let recs = (0..40).map(|q| record(m, q, SystemOutput::Choice(Some(Letter::C)), &["FINAL: C"])).collect();
                MethodResult::new(*m, recs)
            })
            .collect();
        let (blind, key) = parse_sample(&results, PARSE_SAMPLE_SIZE, 9);
        assert_eq!((blind.len(), key.len()), (50, 50));
        assert_eq!(parse_sample(&results, PARSE_SAMPLE_SIZE, 9), (blind.clone(), key.clone()));
        assert_ne!(parse_sample(&results, PARSE_SAMPLE_SIZE, 10).1, key);
        let text = serde_json::to_string(&blind).unwrap();
        assert!(!text.contains("EJ-Full") && !text.contains("S1") && !text.contains("\"q"));
        assert!(key.iter().any(|k| k.method == "S1") && key.iter().any(|k| k.method == "EJ-Full"));
    }

    #[test]
    fn free_form_and_rawless_records_are_skipped() {
        let recs = vec![
            record("S1", 0, SystemOutput::Text("x".into()), &["x"]),
            record("S1", 1, SystemOutput::Choice(None), &[]),
            record("S1", 2, SystemOutput::Choice(None), &["FINAL: A or B"]),
        ];
        let (blind, key) = parse_sample(&[MethodResult::new("S1", recs)], 50, 0);
        assert_eq!(blind.len(), 1);
        assert_eq!((key[0].question_id.as_str(), key[0].extracted), ("q2", None));
    }
}

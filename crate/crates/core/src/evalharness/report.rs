use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::stats::{holm_bonferroni, mcnemar, selective_eval, stratified_bootstrap_ci, SelectiveStats, StatsError};
use crate::accounting::{method_summary, QueryUsage, UsageSummary};
use crate::council::SystemOutput;
use crate::verifier::ClaimTag;

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub method: String,
    pub question_id: String,
    pub category: String,
    pub correct: bool,
    pub system_output: SystemOutput,
    pub usage: QueryUsage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all_consistent: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_tags: Option<Vec<ClaimTag>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    /// Raw model texts the system output was parsed from.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub records: Vec<QuestionRecord>,
    pub accuracy: f64,
}

impl MethodResult {
    pub fn new(method: impl Into<String>, records: Vec<QuestionRecord>) -> Self {
        let accuracy = if records.is_empty() {
            0.0
        } else {
            records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64
        };
        Self { method: method.into(), records, accuracy }
    }

    pub fn flags(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.correct).collect()
    }

    /// Coverage and accuracy over questions whose report was all consistent.
    /// Absent for methods without a verification stage.
    pub fn selective(&self) -> Option<SelectiveStats> {
        if self.records.iter().all(|r| r.all_consistent.is_none()) {
            return None;
        }
        let items: Vec<(bool, bool)> =
            self.records.iter().map(|r| (r.correct, r.all_consistent.unwrap_or(false))).collect();
        Some(selective_eval(&items))
    }

    pub fn usage_summary(&self) -> UsageSummary {
        method_summary(&self.records.iter().map(|r| r.usage.clone()).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub ci: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selective: Option<SelectiveStats>,
    pub usage: UsageSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub pair: (String, String),
    /// Accuracy of the first method minus the second.
    pub delta: f64,
    pub b: u64,
    pub c: u64,
    pub chi2: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatOptions {
    pub seed: u64,
    pub n_resamples: usize,
    pub alpha: f64,
    /// Method every other method is compared against. Defaults to the first
    /// council method, else the first method.
    pub reference: Option<String>,
}

impl Default for StatOptions {
    fn default() -> Self {
        Self { seed: 0, n_resamples: 10_000, alpha: 0.05, reference: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub seed: u64,
    pub n_resamples: usize,
    pub alpha: f64,
    pub methods: Vec<MethodStats>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("reference method {0:?} is not among the results")]
    UnknownReference(String),
}

/// Reorders `other` to follow `reference`'s question order.
fn paired<'a>(reference: &MethodResult, other: &'a MethodResult) -> Result<Vec<&'a QuestionRecord>, StatsError> {
    if reference.records.len() != other.records.len() {
        return Err(StatsError::LengthMismatch(reference.records.len(), other.records.len()));
    }
    let by_id: BTreeMap<&str, &QuestionRecord> =
        other.records.iter().map(|r| (r.question_id.as_str(), r)).collect();
    reference
        .records
        .iter()
        .map(|r| by_id.get(r.question_id.as_str()).copied().ok_or_else(|| StatsError::Unpaired(r.question_id.clone())))
        .collect()
}

pub fn compute_stat_report(results: &[MethodResult], opts: &StatOptions) -> Result<StatReport, ReportError> {
    let mut methods = Vec::with_capacity(results.len());
    for result in results {
        let flags = result.flags();
        let categories: Vec<&str> = result.records.iter().map(|r| r.category.as_str()).collect();
        let ci = stratified_bootstrap_ci(&flags, &categories, opts.n_resamples, opts.seed)?;
        methods.push(MethodStats {
            method: result.method.clone(),
            n: result.records.len(),
            correct: flags.iter().filter(|f| **f).count(),
            accuracy: result.accuracy,
            ci,
            selective: result.selective(),
            usage: result.usage_summary(),
        });
    }

    let mut comparisons = Vec::new();
    if results.len() > 1 {
        let reference = match &opts.reference {
            Some(name) => results
                .iter()
                .find(|r| &r.method == name)
                .ok_or_else(|| ReportError::UnknownReference(name.clone()))?,
            None => results.iter().find(|r| r.method.starts_with("EJ")).unwrap_or(&results[0]),
        };
        let mut raw = Vec::new();
        for other in results.iter().filter(|r| r.method != reference.method) {
            let aligned = paired(reference, other)?;
            let other_flags: Vec<bool> = aligned.iter().map(|r| r.correct).collect();
            let m = mcnemar(&reference.flags(), &other_flags)?;
            raw.push(Comparison {
                pair: (reference.method.clone(), other.method.clone()),
                delta: reference.accuracy - other.accuracy,
                b: m.b,
                c: m.c,
                chi2: m.chi2,
                p_raw: m.p,
                p_adjusted: m.p,
                reject: false,
            });
        }
        let p: Vec<f64> = raw.iter().map(|c| c.p_raw).collect();
        let holm = holm_bonferroni(&p, opts.alpha)?;
        for (c, (adj, rej)) in raw.iter_mut().zip(holm.adjusted.iter().zip(&holm.rejected)) {
            c.p_adjusted = *adj;
            c.reject = *rej;
        }
        comparisons = raw;
    }

    Ok(StatReport { seed: opts.seed, n_resamples: opts.n_resamples, alpha: opts.alpha, methods, comparisons })
}

#[derive(Debug, thiserror::Error)]
pub enum ResultsFileError {
    #[error("reading results: {0}")]
    Io(#[from] std::io::Error),
    #[error("results line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn write_results(mut writer: impl Write, results: &[MethodResult]) -> std::io::Result<()> {
    for result in results {
        for record in &result.records {
            serde_json::to_writer(&mut writer, record)?;
            writer.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Reads a results file back into per-method results, methods in order of
/// first appearance.
pub fn read_results(reader: impl Read) -> Result<Vec<MethodResult>, ResultsFileError> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<QuestionRecord>> = BTreeMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QuestionRecord = serde_json::from_str(&line)
            .map_err(|e| ResultsFileError::Parse { line: i + 1, message: e.to_string() })?;
        if !grouped.contains_key(&record.method) {
            order.push(record.method.clone());
        }
        grouped.entry(record.method.clone()).or_default().push(record);
    }
    Ok(order
        .into_iter()
        .map(|m| {
            let records = grouped.remove(&m).unwrap_or_default();
            MethodResult::new(m, records)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemas::Letter;

    fn record(method: &str, id: usize, correct: bool, consistent: Option<bool>) -> QuestionRecord {
        QuestionRecord {
            method: method.into(),
            question_id: format!("q{id}"),
            category: if id % 2 == 0 { "even".into() } else { "odd".into() },
            correct,
            system_output: SystemOutput::Choice(Some(Letter::A)),
            usage: QueryUsage::default(),
            all_consistent: consistent,
            claim_tags: None,
            flags: vec![],
            raw_outputs: vec![],
        }
    }

    #[test]
    fn planted_discordance() {
        // 40 questions: EJ right on 0..30, S1 right on 0..20 and 30..35.
        let ej: Vec<_> = (0..40).map(|i| record("EJ-Full", i, i < 30, Some(true))).collect();
        let s1: Vec<_> = (0..40).rev().map(|i| record("S1", i, i < 20 || (30..35).contains(&i), None)).collect();
        let results = vec![MethodResult::new("S1", s1), MethodResult::new("EJ-Full", ej)];
        let opts = StatOptions { n_resamples: 500, ..StatOptions::default() };
        let report = compute_stat_report(&results, &opts).unwrap();
        assert_eq!(report.comparisons.len(), 1);
        let c = &report.comparisons[0];
        assert_eq!(c.pair, ("EJ-Full".to_string(), "S1".to_string()));
        assert_eq!((c.b, c.c), (10, 5));
        assert!((c.chi2 - 16.0 / 15.0).abs() < 1e-12);
        assert_eq!(c.p_adjusted, c.p_raw);
        assert!((c.delta - 0.125).abs() < 1e-12);
        assert!(report.methods[0].selective.is_none());
        assert_eq!(report.methods[1].selective.unwrap().coverage, 1.0);
    }

    #[test]
    fn single_method_has_no_comparisons() {
        let r = MethodResult::new("S1", (0..10).map(|i| record("S1", i, i < 6, None)).collect());
        let report = compute_stat_report(&[r], &StatOptions { n_resamples: 200, ..Default::default() }).unwrap();
        assert!(report.comparisons.is_empty());
        let (lo, hi) = report.methods[0].ci;
        assert!(lo <= 0.6 && 0.6 <= hi);
    }

    #[test]
    fn unpaired_is_an_error() {
        let a = MethodResult::new("EJ-Full", vec![record("EJ-Full", 1, true, None)]);
        let b = MethodResult::new("S1", vec![record("S1", 2, true, None)]);
        let err = compute_stat_report(&[a, b], &StatOptions { n_resamples: 10, ..Default::default() }).unwrap_err();
        assert!(matches!(err, ReportError::Stats(StatsError::Unpaired(_))));
    }

    #[test]
    fn results_file_round_trip() {
        let results = vec![
            MethodResult::new("EJ-Full", (0..3).map(|i| record("EJ-Full", i, true, Some(false))).collect()),
            MethodResult::new("S1", (0..3).map(|i| record("S1", i, i == 0, None)).collect()),
        ];
        let mut buf = Vec::new();
        write_results(&mut buf, &results).unwrap();
        let back = read_results(buf.as_slice()).unwrap();
        assert_eq!(back, results);
        let truncated = &buf[..buf.len() - 10];
        assert!(matches!(read_results(truncated), Err(ResultsFileError::Parse { line: 6, .. })));
    }
}

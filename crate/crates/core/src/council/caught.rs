use serde::{Deserialize, Serialize};

use super::AggregatedIssue;
use crate::evalharness::normalize_answer;
use crate::schemas::{CandidateAnswer, IssueType};

/// Shortest flagged span worth matching against the final answer.
pub const MIN_SPAN_CHARS: usize = 20;

/// A flagged issue and whether the flagged span survived into the final answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaughtErrorEvent {
    pub candidate: usize,
    pub issue_type: IssueType,
    pub detail: String,
    pub span: String,
    pub removed: bool,
}

fn quoted_segments(detail: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for (open, close) in [('"', '"'), ('\u{201c}', '\u{201d}')] {
        let mut rest = detail;
        while let Some(start) = rest.find(open) {
            let after = &rest[start + open.len_utf8()..];
            let Some(end) = after.find(close) else { break };
            out.push(&after[..end]);
            rest = &after[end + close.len_utf8()..];
        }
    }
    out
}

/// Longest run of whole words shared by `a` and `b`.
fn longest_common_words(a: &str, b: &str) -> String {
    let a: Vec<&str> = a.split_whitespace().collect();
    let b: Vec<&str> = b.split_whitespace().collect();
    let mut prev = vec![0usize; b.len() + 1];
    let (mut best_len, mut best_end) = (0, 0);
    for i in 1..=a.len() {
        let mut cur = vec![0usize; b.len() + 1];
        for j in 1..=b.len() {
            if a[i - 1] == b[j - 1] {
                cur[j] = prev[j - 1] + 1;
                if cur[j] > best_len {
                    best_len = cur[j];
                    best_end = i;
                }
            }
        }
        prev = cur;
    }
    a[best_end - best_len..best_end].join(" ")
}

/// The part of the candidate an issue refers to: a quoted fragment of the
/// detail found in the candidate, else the longest normalized overlap of
/// detail and candidate if long enough, else the whole candidate.
pub fn referenced_span(detail: &str, candidate_text: &str) -> String {
    let candidate_norm = normalize_answer(candidate_text);
    for quote in quoted_segments(detail) {
        let q = normalize_answer(quote);
        if !q.is_empty() && candidate_norm.contains(&q) {
            return q;
        }
    }
    let overlap = longest_common_words(&normalize_answer(detail), &candidate_norm);
    if overlap.chars().count() >= MIN_SPAN_CHARS {
        overlap
    } else {
        candidate_norm
    }
}

/// True when no window of `MIN_SPAN_CHARS` normalized characters of `span`
/// (or the whole span, if shorter) occurs in the normalized final answer.
pub fn span_removed(span: &str, final_answer: &str) -> bool {
    let span: Vec<char> = normalize_answer(span).chars().collect();
    if span.is_empty() {
        return true;
    }
    let final_norm = normalize_answer(final_answer);
    let width = span.len().min(MIN_SPAN_CHARS);
    !span
        .windows(width)
        .any(|w| final_norm.contains(&w.iter().collect::<String>()))
}

/// Analysis-only heuristic. A paraphrase that keeps a flagged error still
/// reads as removed unless it copies a long verbatim run.
pub fn caught_error_events(
    issues: &[AggregatedIssue],
    candidates: &[CandidateAnswer],
    final_answer: &str,
) -> Vec<CaughtErrorEvent> {
    issues
        .iter()
        .filter_map(|issue| {
            let candidate = candidates.get(issue.candidate)?;
            let span = referenced_span(&issue.detail, &candidate.text);
            Some(CaughtErrorEvent {
                candidate: issue.candidate,
                issue_type: issue.issue_type,
                detail: issue.detail.clone(),
                removed: span_removed(&span, final_answer),
                span,
            })
        })
        .collect()
}

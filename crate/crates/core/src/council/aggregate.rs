use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnonymizationMap;
use crate::schemas::{IssueType, Letter, Review, RoleId, CANDIDATE_COUNT};

/// Candidate labels A..D best first: descending by (accuracy, insight,
/// clarity), ties by label. Labels the review does not rank go last.
pub fn reviewer_order(review: &Review) -> Vec<Letter> {
    let mut ranked: Vec<_> = review
        .rankings
        .iter()
        .filter(|r| r.candidate.index() < CANDIDATE_COUNT)
        .map(|r| (Reverse((r.accuracy, r.insight, r.clarity)), r.candidate))
        .collect();
    ranked.sort();
    let mut order: Vec<Letter> = ranked.into_iter().map(|(_, l)| l).collect();
    for l in &Letter::ALL[..CANDIDATE_COUNT] {
        if !order.contains(l) {
            order.push(*l);
        }
    }
    order
}

/// Borda count over orders of candidate indices `0..n`: position `p`
/// (1-based) earns `n - p`. Returns per-candidate scores and the consensus
/// order (score descending, index ascending).
pub fn borda_aggregate(orders: &[Vec<usize>], n: usize) -> (Vec<u64>, Vec<usize>) {
    let mut scores = vec![0u64; n];
    for order in orders {
        debug_assert_eq!(order.len(), n);
        for (pos, &candidate) in order.iter().enumerate() {
            scores[candidate] += (n - 1 - pos) as u64;
        }
    }
    let mut consensus: Vec<usize> = (0..n).collect();
    consensus.sort_by_key(|&i| (Reverse(scores[i]), i));
    (scores, consensus)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedIssue {
    pub candidate: usize,
    pub issue_type: IssueType,
    pub detail: String,
    pub reviewer_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedBestBit {
    pub candidate: usize,
    pub extract: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedReview {
    pub borda_scores: Vec<u64>,
    pub consensus_order: Vec<usize>,
    pub issues: Vec<AggregatedIssue>,
    pub best_bits: Vec<AggregatedBestBit>,
    pub valid_reviews: usize,
    /// No valid review: the order is by candidate index.
    pub degenerate: bool,
}

impl AggregatedReview {
    /// The result when Stage 2 is skipped or every review is invalid.
    pub fn uniform() -> Self {
        aggregate(&[])
    }
}

/// Merges issues flagged for the same (candidate, type) across reviewers,
/// after mapping each reviewer's labels back to candidate indices.
pub fn dedupe_issues(reviews: &[(&Review, &AnonymizationMap)]) -> Vec<AggregatedIssue> {
    let mut merged: BTreeMap<(usize, IssueType), (String, BTreeSet<usize>)> = BTreeMap::new();
    for (review, map) in reviews {
        for issue in &review.issues {
            let Some(candidate) = map.index_of(issue.candidate) else { continue };
            let entry = merged
                .entry((candidate, issue.issue_type))
                .or_insert_with(|| (String::new(), BTreeSet::new()));
            if issue.detail.chars().count() > entry.0.chars().count() {
                entry.0 = issue.detail.clone();
            }
            entry.1.insert(map.reviewer_slot);
        }
    }
    merged
        .into_iter()
        .map(|((candidate, issue_type), (detail, reviewers))| AggregatedIssue {
            candidate,
            issue_type,
            detail,
            reviewer_count: reviewers.len(),
        })
        .collect()
}

/// Borda-merges valid reviews and de-anonymizes their issues and best bits.
pub fn aggregate(reviews: &[(&Review, &AnonymizationMap)]) -> AggregatedReview {
    let orders: Vec<Vec<usize>> = reviews
        .iter()
        .map(|(review, map)| {
            reviewer_order(review)
                .into_iter()
                .map(|l| map.index_of(l).expect("map covers A-D"))
                .collect()
        })
        .collect();
    let (borda_scores, consensus_order) = borda_aggregate(&orders, CANDIDATE_COUNT);
    let best_bits = reviews
        .iter()
        .flat_map(|(review, map)| {
            review.best_bits.iter().filter_map(|b| {
                map.index_of(b.candidate)
                    .map(|candidate| AggregatedBestBit { candidate, extract: b.extract.clone() })
            })
        })
        .collect();
    AggregatedReview {
        borda_scores,
        consensus_order,
        issues: dedupe_issues(reviews),
        best_bits,
        valid_reviews: reviews.len(),
        degenerate: reviews.is_empty(),
    }
}

/// Compact text block handed to the chairman, naming candidates by role.
pub fn render_summary(agg: &AggregatedReview, roles: &[RoleId]) -> String {
    let name = |i: usize| roles.get(i).map(|r| r.display_name()).unwrap_or("?");
    let mut out = format!("Cross-review summary ({} valid reviews)\n", agg.valid_reviews);
    let order: Vec<&str> = agg.consensus_order.iter().map(|&i| name(i)).collect();
    out.push_str(&format!("Consensus order: {}\n", order.join(" > ")));
    out.push_str("Borda scores:");
    for &i in &agg.consensus_order {
        out.push_str(&format!(" {}={}", name(i), agg.borda_scores[i]));
    }
    out.push('\n');
    if agg.issues.is_empty() {
        out.push_str("Issues: none\n");
    } else {
        out.push_str("Issues:\n");
        for issue in &agg.issues {
            out.push_str(&format!(
                "- {} [{}] flagged by {}: {}\n",
                name(issue.candidate),
                issue.issue_type,
                issue.reviewer_count,
                issue.detail
            ));
        }
    }
    if !agg.best_bits.is_empty() {
        out.push_str("Best bits:\n");
        for bit in &agg.best_bits {
            out.push_str(&format!("- {}: {}\n", name(bit.candidate), bit.extract));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemas::{Issue, Ranking};
    use Letter::*;

    fn ranking(candidate: Letter, a: u8, i: u8, c: u8) -> Ranking {
        Ranking { candidate, accuracy: a, insight: i, clarity: c }
    }

    fn review(rankings: Vec<Ranking>) -> Review {
        Review { rankings, issues: vec![], best_bits: vec![] }
    }

    #[test]
    fn example_scores_order() {
        let r = review(vec![ranking(A, 8, 7, 9), ranking(C, 7, 8, 7), ranking(B, 6, 5, 6), ranking(D, 5, 6, 5)]);
        assert_eq!(reviewer_order(&r), vec![A, C, B, D]);
    }

    #[test]
    fn ties_and_omissions() {
        let tie = review(vec![ranking(D, 7, 7, 7), ranking(B, 7, 7, 7), ranking(C, 7, 7, 7), ranking(A, 7, 7, 7)]);
        assert_eq!(reviewer_order(&tie), vec![A, B, C, D]);
        let r = review(vec![ranking(B, 7, 8, 9), ranking(A, 7, 9, 1)]);
        assert_eq!(reviewer_order(&r), vec![A, B, C, D]);
        let r = review(vec![ranking(D, 9, 9, 9)]);
        assert_eq!(reviewer_order(&r), vec![D, A, B, C]);
    }

    #[test]
    fn borda_examples() {
        // A=0, B=1, C=2, D=3
        let orders = vec![vec![0, 2, 1, 3], vec![0, 1, 2, 3], vec![2, 0, 1, 3], vec![0, 2, 3, 1]];
        let (scores, consensus) = borda_aggregate(&orders, 4);
        assert_eq!(scores, vec![11, 4, 8, 1]);
        assert_eq!(consensus, vec![0, 2, 1, 3]);

        let (_, single) = borda_aggregate(&[vec![3, 1, 0, 2]], 4);
        assert_eq!(single, vec![3, 1, 0, 2]);

        let (scores, consensus) = borda_aggregate(&[vec![0, 1, 2, 3], vec![3, 2, 1, 0]], 4);
        assert_eq!(scores, vec![3, 3, 3, 3]);
        assert_eq!(consensus, vec![0, 1, 2, 3]);

        let (scores, consensus) = borda_aggregate(&[], 4);
        assert_eq!(scores, vec![0; 4]);
        assert_eq!(consensus, vec![0, 1, 2, 3]);
    }

    fn issue(candidate: Letter, issue_type: IssueType, detail: &str) -> Issue {
        Issue { candidate, issue_type, detail: detail.into() }
    }

    #[test]
    fn dedupe_across_permutations() {
        let m0 = AnonymizationMap { reviewer_slot: 0, labels: [A, B, C, D] };
        let m1 = AnonymizationMap { reviewer_slot: 1, labels: [D, C, B, A] };
        // both flag candidate 1, seen as B by reviewer 0 and C by reviewer 1
        let r0 = Review {
            rankings: vec![],
            issues: vec![issue(B, IssueType::FactualRisk, "wrong date"), issue(B, IssueType::Unclear, "vague")],
            best_bits: vec![],
        };
        let r1 = Review {
            rankings: vec![],
            issues: vec![
                issue(C, IssueType::FactualRisk, "the date is wrong by a year"),
                issue(C, IssueType::FactualRisk, "repeated by same reviewer"),
            ],
            best_bits: vec![],
        };
        let out = dedupe_issues(&[(&r0, &m0), (&r1, &m1)]);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].candidate, 1);
        assert_eq!(out[0].issue_type, IssueType::FactualRisk);
        assert_eq!(out[0].reviewer_count, 2);
        assert_eq!(out[0].detail, "the date is wrong by a year");
        assert_eq!(out[1].issue_type, IssueType::Unclear);
        assert_eq!(out[1].reviewer_count, 1);
    }

    #[test]
    fn borda_sum_invariant() {
        let m = AnonymizationMap::identity(0);
        let r = review(vec![ranking(C, 9, 1, 1)]);
        let agg = aggregate(&[(&r, &m), (&r, &m), (&r, &m)]);
        assert_eq!(agg.borda_scores.iter().sum::<u64>(), 3 * 6);
        assert_eq!(agg.consensus_order[0], 2);
        assert!(!agg.degenerate);
        assert!(AggregatedReview::uniform().degenerate);
    }

    #[test]
    fn summary_names_roles() {
        let m = AnonymizationMap::identity(0);
        let mut r = review(vec![ranking(B, 9, 9, 9)]);
        r.issues.push(issue(A, IssueType::Incomplete, "misses winter"));
        let text = render_summary(&aggregate(&[(&r, &m)]), &RoleId::ALL);
        assert!(text.contains("Consensus order: Edge Case Finder > Direct Answerer"));
        assert!(text.contains("- Direct Answerer [incomplete] flagged by 1: misses winter"));
    }
}

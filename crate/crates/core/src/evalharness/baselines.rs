use std::collections::BTreeMap;

use crate::schemas::Letter;

use super::scoring::normalize_answer;

/// Most frequent present letter; ties go to the alphabetically smallest.
/// All-absent input yields `None`.
pub fn self_consistency_select(choices: &[Option<Letter>]) -> Option<Letter> {
    let mut counts: BTreeMap<Letter, usize> = BTreeMap::new();
    for l in choices.iter().flatten() {
        *counts.entry(*l).or_default() += 1;
    }
    // BTreeMap iterates A..E, so a strict `>` keeps the first maximum.
    let mut best: Option<(Letter, usize)> = None;
    for (l, n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((l, n));
        }
    }
    best.map(|(l, _)| l)
}

/// A letter chosen by at least two of the three models; otherwise the first
/// model's choice (the designated strongest).
pub fn majority_vote(choices: &[Option<Letter>; 3]) -> Option<Letter> {
    for l in choices.iter().flatten() {
        if choices.iter().filter(|c| **c == Some(*l)).count() >= 2 {
            return Some(*l);
        }
    }
    choices[0]
}

/// Oracle upper bound: any candidate matches gold. Not deployable.
pub fn best_of_3(choices: &[Option<Letter>; 3], gold: Letter) -> bool {
    choices.contains(&Some(gold))
}

/// Free-form analogue of [`self_consistency_select`]: index of an answer
/// whose normalized form is most frequent, ties to the earliest answer.
pub fn text_mode_index(answers: &[String]) -> Option<usize> {
    let normalized: Vec<String> = answers.iter().map(|a| normalize_answer(a)).collect();
    let mut best: Option<(usize, usize)> = None;
    for (i, n) in normalized.iter().enumerate() {
        if n.is_empty() {
            continue;
        }
        let count = normalized.iter().filter(|m| *m == n).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((i, count));
        }
    }
    best.map(|(i, _)| i)
}

/// Free-form analogue of [`majority_vote`]: an answer shared (after
/// normalization) by at least two models, else the first model's answer.
pub fn text_majority_index(answers: &[String]) -> usize {
    match text_mode_index(answers) {
        Some(i) if {
            let n = normalize_answer(&answers[i]);
            answers.iter().filter(|a| normalize_answer(a) == n).count() >= 2
        } =>
        {
            i
        }
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Letter::*;

    #[test]
    fn sc_examples() {
        assert_eq!(self_consistency_select(&[Some(B), Some(B), Some(A)]), Some(B));
        assert_eq!(self_consistency_select(&[Some(A), Some(B)]), Some(A));
        assert_eq!(self_consistency_select(&[Some(C), Some(B)]), Some(B));
        assert_eq!(self_consistency_select(&[None, None, None]), None);
        assert_eq!(self_consistency_select(&[None, Some(D), None]), Some(D));
    }

    #[test]
    fn mv_examples() {
        assert_eq!(majority_vote(&[Some(C), Some(C), Some(A)]), Some(C));
        assert_eq!(majority_vote(&[Some(A), Some(B), Some(C)]), Some(A));
        assert_eq!(majority_vote(&[None, Some(B), Some(B)]), Some(B));
        assert_eq!(majority_vote(&[None, Some(B), Some(C)]), None);
    }

    #[test]
    fn bo3() {
        assert!(best_of_3(&[Some(A), Some(B), Some(C)], B));
        assert!(!best_of_3(&[Some(A), Some(A), Some(A)], B));
        assert!(!best_of_3(&[None, Some(A), Some(C)], B));
    }

    #[test]
    fn text_selectors() {
        let a = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(text_mode_index(&a(&["Paris", "London", "paris."])), Some(0));
        assert_eq!(text_mode_index(&a(&["x", "y"])), Some(0));
        assert_eq!(text_mode_index(&a(&["", " "])), None);
        assert_eq!(text_majority_index(&a(&["x", "y", "Y"])), 1);
        assert_eq!(text_majority_index(&a(&["x", "y", "z"])), 0);
    }
}

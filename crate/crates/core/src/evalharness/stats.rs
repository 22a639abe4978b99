//! Paired significance tests, multiple-comparison correction and
//! stratified bootstrap intervals.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::accounting::nearest_rank_index;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("paired vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no observations")]
    Empty,
    #[error("p-value {0} is outside [0, 1]")]
    InvalidP(f64),
    #[error("question {0} is present on only one side of the comparison")]
    Unpaired(String),
    #[error("category {0} is present on only one side of the comparison")]
    CategoryMissing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// First method correct, second wrong.
    pub b: u64,
    /// First method wrong, second correct.
    pub c: u64,
    pub chi2: f64,
    pub p: f64,
}

/// Upper tail of the chi-square distribution with one degree of freedom,
/// via the two-sided normal tail: `2 * (1 - Phi(sqrt(x)))`.
pub fn chi2_sf_1df(chi2: f64) -> f64 {
    if chi2 <= 0.0 {
        return 1.0;
    }
    erfc((chi2 / 2.0).sqrt()).clamp(0.0, 1.0)
}

/// Continuity-corrected McNemar statistic from discordant counts.
pub fn mcnemar_from_counts(b: u64, c: u64) -> McNemar {
    if b + c == 0 {
        return McNemar { b, c, chi2: 0.0, p: 1.0 };
    }
    let corrected = ((b as f64 - c as f64).abs() - 1.0).max(0.0);
    let chi2 = corrected * corrected / (b + c) as f64;
    McNemar { b, c, chi2, p: chi2_sf_1df(chi2) }
}

pub fn mcnemar(flags1: &[bool], flags2: &[bool]) -> Result<McNemar, StatsError> {
    if flags1.len() != flags2.len() {
        return Err(StatsError::LengthMismatch(flags1.len(), flags2.len()));
    }
    let (mut b, mut c) = (0, 0);
    for (&x, &y) in flags1.iter().zip(flags2) {
        match (x, y) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolmResult {
    /// Adjusted p-values, in the input order.
    pub adjusted: Vec<f64>,
    pub rejected: Vec<bool>,
}

/// Holm step-down adjustment. `adjusted_(i) = max_{j<=i} min(1, (m-j+1) p_(j))`
/// over ascending-sorted p; a hypothesis is rejected when its adjusted value
/// is at most `alpha`.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Result<HolmResult, StatsError> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::InvalidP(bad));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p_values[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    let rejected = adjusted.iter().map(|&p| p <= alpha).collect();
    Ok(HolmResult { adjusted, rejected })
}

fn strata<'a>(categories: &[&'a str]) -> BTreeMap<&'a str, Vec<usize>> {
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in categories.iter().enumerate() {
        map.entry(c).or_default().push(i);
    }
    map
}

/// Accuracy of each stratified resample. With `check_strata`, every resample
/// asserts that it drew exactly each category's size from that category.
pub fn bootstrap_accuracies(
    flags: &[bool],
    categories: &[&str],
    n_resamples: usize,
    seed: u64,
    check_strata: bool,
) -> Result<Vec<f64>, StatsError> {
    if flags.is_empty() || n_resamples == 0 {
        return Err(StatsError::Empty);
    }
    if flags.len() != categories.len() {
        return Err(StatsError::LengthMismatch(flags.len(), categories.len()));
    }
    let strata = strata(categories);
    let n = flags.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let mut correct = 0usize;
        for (category, members) in &strata {
            let mut drawn = 0usize;
            for _ in 0..members.len() {
                let pick = members[rng.random_range(0..members.len())];
                if check_strata {
                    assert_eq!(categories[pick], *category, "resample crossed strata");
                }
                drawn += 1;
                correct += flags[pick] as usize;
            }
            if check_strata {
                assert_eq!(drawn, members.len(), "resample changed size of stratum {category}");
            }
        }
        out.push(correct as f64 / n);
    }
    Ok(out)
}

/// Percentile 95% interval (2.5th and 97.5th, nearest-rank) of the
/// stratified bootstrap distribution of accuracy.
pub fn stratified_bootstrap_ci(
    flags: &[bool],
    categories: &[&str],
    n_resamples: usize,
    seed: u64,
) -> Result<(f64, f64), StatsError> {
    let mut acc = bootstrap_accuracies(flags, categories, n_resamples, seed, cfg!(debug_assertions))?;
    acc.sort_by(|a, b| a.total_cmp(b));
    let lo = acc[nearest_rank_index(acc.len(), 2.5)];
    let hi = acc[nearest_rank_index(acc.len(), 97.5)];
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectiveStats {
    pub covered: usize,
    pub total: usize,
    pub coverage: f64,
    /// Accuracy on the covered subset; absent when nothing is covered.
    pub accuracy: Option<f64>,
}

/// `items` are `(correct, all_consistent)` pairs.
pub fn selective_eval(items: &[(bool, bool)]) -> SelectiveStats {
    let total = items.len();
    let covered: Vec<bool> = items.iter().filter(|(_, c)| *c).map(|(ok, _)| *ok).collect();
    let n = covered.len();
    SelectiveStats {
        covered: n,
        total,
        coverage: if total == 0 { 0.0 } else { n as f64 / total as f64 },
        accuracy: (n > 0).then(|| covered.iter().filter(|x| **x).count() as f64 / n as f64),
    }
}

/// One scored question, as needed for paired statistics.
#[derive(Debug, Clone, Copy)]
pub struct Outcome<'a> {
    pub question_id: &'a str,
    pub category: &'a str,
    pub correct: bool,
}

/// Per-category `accuracy(a) - accuracy(b)`, paired by question id.
pub fn category_delta(a: &[Outcome<'_>], b: &[Outcome<'_>]) -> Result<BTreeMap<String, f64>, StatsError> {
    fn tally<'a>(xs: &[Outcome<'a>]) -> BTreeMap<&'a str, (usize, usize)> {
        let mut m: BTreeMap<&'a str, (usize, usize)> = BTreeMap::new();
        for o in xs {
            let e = m.entry(o.category).or_default();
            e.0 += o.correct as usize;
            e.1 += 1;
        }
        m
    }
    let ids_b: BTreeMap<&str, ()> = b.iter().map(|o| (o.question_id, ())).collect();
    if let Some(o) = a.iter().find(|o| !ids_b.contains_key(o.question_id)) {
        return Err(StatsError::Unpaired(o.question_id.to_string()));
    }
    let (ta, tb) = (tally(a), tally(b));
    for cat in tb.keys() {
        if !ta.contains_key(cat) {
            return Err(StatsError::CategoryMissing(cat.to_string()));
        }
    }
    ta.iter()
        .map(|(cat, (ca, na))| {
            let (cb, nb) = tb.get(cat).ok_or_else(|| StatsError::CategoryMissing(cat.to_string()))?;
            Ok((cat.to_string(), *ca as f64 / *na as f64 - *cb as f64 / *nb as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn reference_counts() {
        let m = mcnemar_from_counts(25, 5);
        assert!((m.chi2 - 361.0 / 30.0).abs() < 1e-12);
        let reference = ChiSquared::new(1.0).unwrap().sf(m.chi2);
        assert!((m.p - reference).abs() < 1e-9);
        assert_eq!(mcnemar_from_counts(0, 0), McNemar { b: 0, c: 0, chi2: 0.0, p: 1.0 });
        let floor = mcnemar_from_counts(1, 0);
        assert_eq!((floor.chi2, floor.p), (0.0, 1.0));
    }

    #[test]
    fn from_flags() {
        let a = [true, true, false, false, true];
        let b = [false, true, true, false, true];
        let m = mcnemar(&a, &b).unwrap();
        assert_eq!((m.b, m.c), (1, 1));
        assert_eq!(mcnemar(&a, &a).unwrap().p, 1.0);
        assert!(matches!(mcnemar(&a, &b[..2]), Err(StatsError::LengthMismatch(5, 2))));
    }

    #[test]
    fn holm_examples() {
        let r = holm_bonferroni(&[0.001, 0.01, 0.03], 0.05).unwrap();
        for (x, y) in r.adjusted.iter().zip([0.003, 0.02, 0.03]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(r.rejected, vec![true, true, true]);

        let r = holm_bonferroni(&[0.04, 0.04], 0.05).unwrap();
        assert_eq!(r.adjusted, vec![0.08, 0.08]);
        assert_eq!(r.rejected, vec![false, false]);

        let r = holm_bonferroni(&[0.2], 0.05).unwrap();
        assert_eq!(r.adjusted, vec![0.2]);

        // input order is preserved
        let r = holm_bonferroni(&[0.03, 0.001], 0.05).unwrap();
        assert!((r.adjusted[0] - 0.03).abs() < 1e-12);
        assert!((r.adjusted[1] - 0.002).abs() < 1e-12);
        assert!(holm_bonferroni(&[1.5], 0.05).is_err());
    }

    #[test]
    fn bootstrap_degenerate_and_deterministic() {
        let flags = vec![true; 30];
        let cats = vec!["x"; 30];
        assert_eq!(stratified_bootstrap_ci(&flags, &cats, 500, 1).unwrap(), (1.0, 1.0));

        let flags: Vec<bool> = (0..50).map(|i| i % 3 != 0).collect();
        let cats: Vec<&str> = (0..50).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        let first = stratified_bootstrap_ci(&flags, &cats, 1000, 7).unwrap();
        assert_eq!(first, stratified_bootstrap_ci(&flags, &cats, 1000, 7).unwrap());
        assert!(stratified_bootstrap_ci(&[], &[], 10, 0).is_err());
    }

    #[test]
    fn selective() {
        let all: Vec<(bool, bool)> = vec![(true, true), (false, true), (true, true)];
        let s = selective_eval(&all);
        assert_eq!(s.coverage, 1.0);
        assert!((s.accuracy.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let none = selective_eval(&[(true, false), (false, false)]);
        assert_eq!(none.coverage, 0.0);
        assert_eq!(none.accuracy, None);
    }

    fn outcomes<'a>(rows: &'a [(&'a str, &'a str, bool)]) -> Vec<Outcome<'a>> {
        rows.iter()
            .map(|(q, c, ok)| Outcome { question_id: q, category: c, correct: *ok })
            .collect()
    }

    #[test]
    fn deltas() {
        let a = [("q1", "x", true), ("q2", "x", true), ("q3", "y", false)];
        let b = [("q1", "x", false), ("q2", "x", false), ("q3", "y", false)];
        let d = category_delta(&outcomes(&a), &outcomes(&b)).unwrap();
        assert_eq!(d["x"], 1.0);
        assert_eq!(d["y"], 0.0);
        let same = category_delta(&outcomes(&a), &outcomes(&a)).unwrap();
        assert!(same.values().all(|v| *v == 0.0));
        let c = [("q1", "x", true), ("q2", "x", true), ("q3", "z", false)];
        assert!(matches!(
            category_delta(&outcomes(&a), &outcomes(&c)),
            Err(StatsError::CategoryMissing(_))
        ));
    }
}

//! Input generators shared by the benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgejury_core::schemas::{Ranking, Review};
use edgejury_core::Letter;

/// `n` random four-candidate reviews with scores in 1..=10.
pub fn random_reviews(n: usize, seed: u64) -> Vec<Review> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut letters = [Letter::A, Letter::B, Letter::C, Letter::D];
            letters.shuffle(&mut rng);
            Review {
                rankings: letters
                    .iter()
                    .map(|&candidate| Ranking {
                        candidate,
                        accuracy: rng.random_range(1..=10),
                        insight: rng.random_range(1..=10),
                        clarity: rng.random_range(1..=10),
                    })
                    .collect(),
                issues: vec![],
                best_bits: vec![],
            }
        })
        .collect()
}

/// Correctness flags at roughly `accuracy`, with categories cycling over `k`
/// names.
pub fn outcomes(n: usize, accuracy: f64, k: usize, seed: u64) -> (Vec<bool>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flags = (0..n).map(|_| rng.random_bool(accuracy)).collect();
    let cats = (0..n).map(|i| format!("cat{}", i % k)).collect();
    (flags, cats)
}

/// Model-style texts ending in a FINAL line, some with noise before it.
pub fn choice_texts(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let letter = Letter::ALL[rng.random_range(0..5)].as_char();
            let body = "Considering each option in turn. ".repeat(1 + i % 8);
            match i % 4 {
                0 => format!("{body}\nFINAL: {letter}"),
                1 => format!("{body}\nFINAL: ({letter})"),
                2 => format!("{body}\nFINAL: A\nFINAL: {letter}"),
                _ => format!("```\n{body}\n```\nfinal answer: **{letter}**"),
            }
        })
        .collect()
}

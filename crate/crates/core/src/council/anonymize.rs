use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::schemas::{Letter, CANDIDATE_COUNT};

/// Hides candidate identity from one reviewer (or the verifier).
/// `labels[i]` is the label shown for candidate index `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizationMap {
    pub reviewer_slot: usize,
    pub labels: [Letter; CANDIDATE_COUNT],
}

impl AnonymizationMap {
    pub fn identity(reviewer_slot: usize) -> Self {
        Self { reviewer_slot, labels: [Letter::A, Letter::B, Letter::C, Letter::D] }
    }

    pub fn label_of(&self, candidate: usize) -> Letter {
        self.labels[candidate]
    }

    pub fn index_of(&self, label: Letter) -> Option<usize> {
        self.labels.iter().position(|l| *l == label)
    }

    /// Candidate indices in label order A, B, C, D.
    pub fn presentation_order(&self) -> [usize; CANDIDATE_COUNT] {
        let mut order = [0; CANDIDATE_COUNT];
        for (index, label) in self.labels.iter().enumerate() {
            order[label.index()] = index;
        }
        order
    }
}

/// Seed for one permutation, derived from every component of its key so that
/// nearby keys give unrelated streams.
pub fn derive_seed(run_seed: u64, query_id: &str, purpose: &str, slot: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update((query_id.len() as u64).to_le_bytes());
    h.update(query_id.as_bytes());
    h.update((purpose.len() as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    h.update((slot as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn permutation(seed: u64, reviewer_slot: usize) -> AnonymizationMap {
    let mut labels = [Letter::A, Letter::B, Letter::C, Letter::D];
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    AnonymizationMap { reviewer_slot, labels }
}

/// Reviewer `reviewer_slot`'s view of the four candidates for `query_id`.
pub fn anonymize(reviewer_slot: usize, run_seed: u64, query_id: &str) -> AnonymizationMap {
    permutation(derive_seed(run_seed, query_id, "review", reviewer_slot), reviewer_slot)
}

/// The verifier's permutation, independent of every reviewer's.
pub fn verifier_map(run_seed: u64, query_id: &str) -> AnonymizationMap {
    permutation(derive_seed(run_seed, query_id, "verify", 0), 0)
}

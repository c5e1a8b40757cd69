//! Deterministic stratified k-fold assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ParityError;

/// Assignment of every sample position to one of `k` folds. Within each
/// class, per-fold counts differ by at most one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.fold_of[i]
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Splits positions into `k` stratified folds, deterministically for a fixed
/// seed. Each class is shuffled and dealt round-robin; the deal continues
/// across classes so total fold sizes also differ by at most one.
pub fn stratified_kfold(
    labels: &[bool],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, ParityError> {
    if k < 2 {
        return Err(ParityError::Shape { reason: format!("k = {k}, need at least 2 folds") });
    }
    if k > labels.len() {
        return Err(ParityError::TooFewSamples { n: labels.len(), need: k });
    }
    let mut positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut negatives: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(ParityError::SingleClass);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);

    let mut fold_of = vec![0usize; labels.len()];
    let mut next = 0usize;
    for class in [&positives, &negatives] {
        for &idx in class.iter() {
            fold_of[idx] = next % k;
            next += 1;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CorpusError;

/// Disjoint index sets covering `0..n`, reproducible from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Train/validation split where fold `i` is held out.
    pub fn split(&self, held_out: usize) -> (Vec<usize>, Vec<usize>) {
        let val = self.folds[held_out].clone();
        let train = self
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != held_out)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        (train, val)
    }
}

/// Seeded shuffle followed by round-robin assignment, so fold sizes differ
/// by at most one.
pub fn split_folds(n_items: usize, k: usize, seed: u64) -> Result<FoldPlan, CorpusError> {
    if k == 0 {
        return Err(CorpusError::TooFewFolds { k });
    }
    if n_items < k {
        return Err(CorpusError::TooFewItems { n: n_items, k });
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut folds = vec![Vec::with_capacity(n_items / k + 1); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    Ok(FoldPlan { seed, folds })
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::CorpusError;

/// Seeded k-fold partition of `0..len` as `(train, test)` index lists.
/// Test folds are disjoint, cover every index and differ in size by at most one.
pub fn split_kfold(len: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>, CorpusError> {
    if k < 2 || k > len {
        return Err(CorpusError::BadSplit { len, k });
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let folds = (0..k)
        .map(|f| {
            let (lo, hi) = (f * len / k, (f + 1) * len / k);
            let test = order[lo..hi].to_vec();
            let train = order[..lo].iter().chain(&order[hi..]).copied().collect();
            (train, test)
        })
        .collect();
    Ok(folds)
}

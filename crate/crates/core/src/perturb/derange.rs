use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::PerturbError;

/// A random assignment `perm` such that item `i` receives the stem of item
/// `perm[i]`, and `groups[perm[i]] != groups[i]` for every `i`.
///
/// Such an assignment exists iff no group holds more than half of the items.
/// A valid assignment is built by laying the groups out contiguously and
/// rotating by the largest group size, then randomized with
/// validity-preserving random transpositions.
pub fn cross_group_derangement<G: Ord>(groups: &[G], seed: u64) -> Result<Vec<usize>, PerturbError> {
    let n = groups.len();
    if n < 2 {
        return Err(PerturbError::TooFewPairs(n));
    }
    let mut by_group: BTreeMap<&G, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g).or_default().push(i);
    }
    let largest = by_group.values().map(Vec::len).max().unwrap_or(0);
    if 2 * largest > n {
        return Err(PerturbError::InfeasibleDerangement {
            largest_group: largest,
            total: n,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks: Vec<Vec<usize>> = by_group.into_values().collect();
    blocks.shuffle(&mut rng);
    for b in &mut blocks {
        b.shuffle(&mut rng);
    }
    let order: Vec<usize> = blocks.into_iter().flatten().collect();
    let mut perm = vec![0usize; n];
    for (p, &i) in order.iter().enumerate() {
        perm[i] = order[(p + largest) % n];
    }

    for _ in 0..20 * n {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j && groups[perm[j]] != groups[i] && groups[perm[i]] != groups[j] {
            perm.swap(i, j);
        }
    }
    Ok(perm)
}

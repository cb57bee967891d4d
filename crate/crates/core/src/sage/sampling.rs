use rand::seq::index;
use rand_chacha::ChaCha8Rng;

/// Per-graph sampling width: `min(sample_cap, ceil(avg_degree))`, at least 1.
pub fn sampling_cap(sample_cap: usize, avg_degree: f64) -> usize {
    let by_degree = avg_degree.ceil().max(1.0) as usize;
    sample_cap.min(by_degree).max(1)
}

/// Uniform sample of `cap` neighbors without replacement, kept in their
/// original order. Lists at or under the cap are returned whole.
pub fn sample_neighbors(neigh: &[usize], cap: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if neigh.len() <= cap {
        return neigh.to_vec();
    }
    let mut picked = index::sample(rng, neigh.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| neigh[i]).collect()
}

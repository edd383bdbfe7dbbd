//! Index-parallel map with a sequential fallback.
//!
//! Work item `i` always receives the RNG stream `i` of the run seed, so results do not
//! depend on the number of worker threads or on the `parallel` feature.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for work item `index` of a run seeded with `seed`.
#[must_use]
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `(0..n).map(f)` evaluated on the rayon pool when `parallel` is enabled.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Always sequential; used by benches and determinism checks.
pub fn map_indices_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn parallel_matches_sequential() {
        let f = |i: usize| stream_rng(7, i as u64).random::<u64>();
        assert_eq!(map_indices(64, f), map_indices_sequential(64, f));
    }
}

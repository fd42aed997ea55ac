use rayon::prelude::*;

/// Runs `f` once per seed in parallel and returns the results in seed
/// order, so the reduction is independent of scheduling.
pub fn replicate<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    seeds.par_iter().map(|&s| f(s)).collect()
}

//! Deterministic parallel replications.
//!
//! Replication `i` of a run with seed `s` always draws from the ChaCha stream
//! `i` of key `s`, so results depend on `(seed, n_reps)` only and never on the
//! number of workers or the scheduling order.

use rand::SeedableRng;
use rayon::prelude::*;

use crate::Stream;

/// The random stream of replication `rep`.
pub fn substream(seed: u64, rep: u64) -> Stream {
    let mut s = Stream::seed_from_u64(seed);
    s.set_stream(rep);
    s
}

/// Worker cap from `RELAY_SIM_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("RELAY_SIM_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs `f(rep, stream)` for `rep in 0..n`, in parallel, returning results in
/// replication order.
pub fn par_map<T, F>(n: u64, seed: u64, threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut Stream) -> T + Sync + Send,
{
    let run = || (0..n).into_par_iter().map(|i| f(i, &mut substream(seed, i))).collect();
    match threads {
        Some(k) => rayon::ThreadPoolBuilder::new().num_threads(k).build().expect("thread pool").install(run),
        None => run(),
    }
}

/// Seed plus worker cap, passed to every experiment.
#[derive(Debug, Clone, Copy)]
pub struct Runner {
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Runner {
    pub fn new(seed: u64) -> Self {
        Runner { seed, threads: threads_from_env() }
    }

    pub fn with_threads(seed: u64, threads: Option<usize>) -> Self {
        Runner { seed, threads }
    }

    pub fn map<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, &mut Stream) -> T + Sync + Send,
    {
        par_map(n, self.seed, self.threads, f)
    }

    /// Same runner on an unrelated key, for a second independent experiment.
    pub fn derive(&self, salt: u64) -> Runner {
        Runner { seed: self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15), threads: self.threads }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn worker_count_does_not_change_results() {
        let f = |i: u64, s: &mut Stream| (i, s.random::<u64>());
        let a = par_map(200, 7, Some(1), f);
        let b = par_map(200, 7, Some(3), f);
        assert_eq!(a, b);
        assert_ne!(a[0].1, a[1].1);
        let c = par_map(200, 8, Some(2), f);
        assert_ne!(a, c);
    }
}

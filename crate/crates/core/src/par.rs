//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper produces results in input order and reduces floating-point
//! sums over fixed-size chunks, so output is bit-identical whether or not
//! the `parallel` feature is enabled and regardless of thread count.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed reduction granularity for deterministic sums.
pub const SUM_CHUNK: usize = 4096;

/// Whether to fan work out across threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Exec {
    pub fn from_workers(workers: usize) -> Self {
        if workers > 1 && cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    /// Runs `f` on a pool of `workers` threads when parallel.
    pub fn install<R: Send>(workers: usize, f: impl FnOnce(Exec) -> R + Send) -> R {
        let exec = Self::from_workers(workers);
        #[cfg(feature = "parallel")]
        if exec == Exec::Parallel {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                return pool.install(|| f(exec));
            }
        }
        f(exec)
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// `Σ f(chunk)` over `0..n` in `SUM_CHUNK` pieces, added in chunk order.
    pub fn sum<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(Range<usize>) -> f64 + Sync + Send,
    {
        let chunks: Vec<Range<usize>> = (0..n)
            .step_by(SUM_CHUNK)
            .map(|s| s..(s + SUM_CHUNK).min(n))
            .collect();
        let partials = self.map(&chunks, |r| f(r.clone()));
        partials.into_iter().fold(0.0, |acc, x| acc + x)
    }
}

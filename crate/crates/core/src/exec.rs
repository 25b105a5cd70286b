//! Chunked data-parallel execution with a sequential fallback.
//!
//! Work is always split into fixed-size chunks and partial results are
//! combined in chunk order, so parallel and sequential runs produce
//! bit-identical floating point results. Without the `parallel` feature
//! every policy runs sequentially.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items per work unit. Fixed so that reductions do not depend on
/// the thread count.
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecPolicy {
    Sequential,
    #[default]
    Parallel,
}

impl ExecPolicy {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }

    /// Applies `f` to consecutive index ranges of `0..n` and returns the
    /// results in range order.
    pub fn map_chunks<T, F>(self, n: usize, chunk: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<usize>) -> T + Sync + Send,
    {
        let chunk = chunk.max(1);
        let n_chunks = n.div_ceil(chunk);
        let range = move |c: usize| c * chunk..((c + 1) * chunk).min(n);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n_chunks).into_par_iter().map(|c| f(range(c))).collect();
        }
        (0..n_chunks).map(|c| f(range(c))).collect()
    }

    /// Sum of `f(i)` over `0..n`, accumulated per chunk and then in chunk
    /// order.
    pub fn sum<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        self.map_chunks(n, CHUNK, |r| r.map(&f).sum::<f64>())
            .into_iter()
            .sum()
    }

    /// Fills `out[i] = f(i)`.
    pub fn fill<F>(self, out: &mut [f64], f: F)
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, block)| {
                for (k, v) in block.iter_mut().enumerate() {
                    *v = f(c * CHUNK + k);
                }
            });
            return;
        }
        for (i, v) in out.iter_mut().enumerate() {
            *v = f(i);
        }
    }
}

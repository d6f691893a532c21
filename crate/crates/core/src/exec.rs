//! Execution backend for the data-parallel inner loops.
//!
//! Every parallel loop in the crate writes disjoint output slots and performs
//! no cross-thread reductions, so results are bit-identical between the two
//! backends. Without the `parallel` feature, [`Backend::Parallel`] silently
//! runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Sequential,
    Parallel,
}

impl Default for Backend {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Backend::Parallel
        } else {
            Backend::Sequential
        }
    }
}

impl Backend {
    /// True when work will actually be spread over a thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Backend::Parallel
    }

    /// `(0..n).map(f).collect()`, possibly in parallel.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Calls `f(k, chunk)` for each consecutive `chunk_len`-sized chunk of `buf`.
    pub fn for_each_chunk<F>(self, buf: &mut [f64], chunk_len: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if chunk_len == 0 {
            return;
        }
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            buf.par_chunks_mut(chunk_len).enumerate().for_each(|(k, c)| f(k, c));
            return;
        }
        buf.chunks_mut(chunk_len).enumerate().for_each(|(k, c)| f(k, c));
    }

    /// Maps over a slice, possibly in parallel, preserving order.
    pub fn map_slice<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

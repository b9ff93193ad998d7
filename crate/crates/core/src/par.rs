//! Data-parallel helpers with a sequential fallback.
//!
//! Work is always split into fixed-size batches whose boundaries depend only
//! on the input length, and per-batch results are combined in batch order.
//! Results are therefore identical for any thread count, and identical
//! between the rayon and sequential paths.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How batched work is executed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Schedule {
    /// Rayon's global pool when the `parallel` feature is enabled, otherwise
    /// the same as `Sequential`.
    #[default]
    Parallel,
    Sequential,
}

impl Schedule {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Schedule::Parallel
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_indices<T, F>(schedule: Schedule, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if schedule.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = schedule;
    (0..n).map(f).collect()
}

/// Maps `f` over consecutive chunks of `items` of length `chunk` (the last may
/// be shorter), preserving order.
pub fn map_chunks<T, U, F>(schedule: Schedule, items: &[T], chunk: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&[T]) -> U + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if schedule.is_parallel() {
        return items.par_chunks(chunk).map(f).collect();
    }
    let _ = schedule;
    items.chunks(chunk).map(f).collect()
}

/// Runs `f` with rayon capped at `threads` workers. `None` or a build without
/// the `parallel` feature runs `f` directly.
pub fn with_threads<R, F>(threads: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
        {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}

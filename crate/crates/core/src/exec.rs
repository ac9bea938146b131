//! Replica-level execution: rayon-backed when the `parallel` feature is on,
//! a plain loop otherwise.
//!
//! Every helper here returns results ordered by index, so output never
//! depends on how work was scheduled. Callers derive their RNG streams from
//! the index alone.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How independent work items (replicas, chains, grid chunks) are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Use a rayon pool. `workers = None` means the global pool.
    #[default]
    Parallel,
    ParallelWith { workers: usize },
}

impl Execution {
    /// Maps a worker count from the CLI/config onto an execution mode.
    pub fn from_workers(workers: usize) -> Self {
        if workers <= 1 {
            Execution::Sequential
        } else {
            Execution::ParallelWith { workers }
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Execution::Sequential)
    }
}

/// Evaluates `f(0..count)` and returns the results in index order.
pub fn map_indexed<T, F>(count: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        match exec {
            Execution::Sequential => {}
            Execution::Parallel => {
                return (0..count).into_par_iter().map(&f).collect();
            }
            Execution::ParallelWith { workers } => {
                if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                    return pool.install(|| (0..count).into_par_iter().map(&f).collect());
                }
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = exec;

    (0..count).map(f).collect()
}

/// Like [`map_indexed`] but stops at the error with the smallest index.
pub fn try_map_indexed<T, E, F>(count: usize, exec: Execution, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    if !exec.is_parallel() {
        return (0..count).map(f).collect();
    }
    // Evaluate everything, then surface the lowest-index error so the
    // reported failure is the same for every worker count.
    map_indexed(count, exec, f).into_iter().collect()
}

/// Deterministic maximum of `f` over `0..count`, chunked for parallel runs.
/// NaN values propagate.
pub fn max_indexed<F>(count: usize, exec: Execution, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    const CHUNK: usize = 256;
    let chunks = count.div_ceil(CHUNK);
    map_indexed(chunks, exec, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(count);
        (lo..hi).map(&f).fold(f64::NEG_INFINITY, nan_max)
    })
    .into_iter()
    .fold(f64::NEG_INFINITY, nan_max)
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

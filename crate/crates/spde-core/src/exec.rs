//! Replica execution with worker-count-independent results. Replicas map to
//! fixed chunks; chunks run in parallel but their outputs are collected and
//! folded in chunk order, so every reduction sees the same operand order no
//! matter how many threads run.

use crate::error::{Result, SpdeError};
use rayon::prelude::*;

/// Replicas per chunk. Fixed by construction, never derived from the worker
/// count: chunk membership defines the reduction order.
pub const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy)]
pub struct Workers(usize);

impl Workers {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(SpdeError::parameter("worker count must be >= 1"));
        }
        Ok(Workers(count))
    }

    pub fn count(&self) -> usize {
        self.0
    }

    pub(crate) fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.0)
            .build()
            .map_err(|e| SpdeError::Capacity(format!("worker pool: {e}")))
    }
}

impl Default for Workers {
    fn default() -> Self {
        Workers(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

/// Run `per_replica` for replicas 0..n and fold chunk accumulators in chunk
/// order. `fold_chunk` consumes one replica result into the chunk state;
/// `fold_total` consumes finished chunk states in ascending chunk index.
pub fn run_replicas<T, A, F, G, H>(
    n_replicas: usize,
    workers: Workers,
    per_replica: F,
    chunk_init: H,
    fold_chunk: G,
) -> Result<Vec<A>>
where
    T: Send,
    A: Send,
    F: Fn(u64) -> Result<T> + Sync,
    G: Fn(&mut A, T) + Sync,
    H: Fn() -> A + Sync,
{
    let n_chunks = n_replicas.div_ceil(CHUNK);
    let pool = workers.pool()?;
    pool.install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = chunk_init();
                let lo = c * CHUNK;
                let hi = ((c + 1) * CHUNK).min(n_replicas);
                for r in lo..hi {
                    let item = per_replica(r as u64)?;
                    fold_chunk(&mut acc, item);
                }
                Ok(acc)
            })
            .collect::<Result<Vec<A>>>()
    })
}

/// Convenience: collect one value per replica, in replica order.
pub fn map_replicas<T, F>(n_replicas: usize, workers: Workers, per_replica: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let chunks = run_replicas(
        n_replicas,
        workers,
        per_replica,
        Vec::new,
        |acc: &mut Vec<T>, item| acc.push(item),
    )?;
    Ok(chunks.into_iter().flatten().collect())
}

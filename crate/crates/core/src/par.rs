// SPDX-License-Identifier: Apache-2.0

//! Deterministic data parallelism.
//!
//! Point sets are split into fixed-size chunks. Each chunk is reduced
//! sequentially and the partial results are combined in chunk order, so the
//! floating point result does not depend on the number of worker threads.

use rayon::prelude::*;

/// Points per chunk in reductions.
pub const CHUNK: usize = 512;

/// Lower bound on work items handed to one rayon task in maps.
pub const MIN_POINTS_PER_TASK: usize = 64;

pub const THREADS_ENV: &str = "SPLATREG_THREADS";

/// Configures the global pool from `SPLATREG_THREADS` (0 or unset = auto).
/// Returns the width in effect. Safe to call more than once.
pub fn init_threads_from_env() -> usize {
    let requested = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if requested > 0 {
        // Fails only if the pool was already built; the existing pool stays.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(requested)
            .build_global();
    }
    rayon::current_num_threads()
}

/// Maps each chunk of `0..n` to a partial result and folds them in order.
pub fn chunked_reduce<T, M, F>(n: usize, map: M, mut fold: F) -> Option<T>
where
    T: Send,
    M: Fn(std::ops::Range<usize>) -> T + Sync,
    F: FnMut(T, T) -> T,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| map(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect();
    let mut it = partials.into_iter();
    let first = it.next()?;
    Some(it.fold(first, &mut fold))
}

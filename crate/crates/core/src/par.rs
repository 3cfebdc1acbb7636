//! Parallel execution seam.
//!
//! Every data-parallel loop in the crate goes through these helpers so the
//! `parallel` feature (rayon) and the sequential fallback compile from the
//! same call sites. Results are bit-identical in both modes: work is split
//! only across independent units (customers, or disjoint time chunks), and
//! every floating-point reduction runs sequentially in a fixed order inside
//! its unit.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for time-axis splitting. Values are per-element, so the
/// chunk size never changes results, only scheduling granularity.
pub(crate) const TIME_CHUNK: usize = 16 * 1024;

/// Maps `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Runs `f(offset, chunk)` over disjoint chunks of `out`.
#[cfg(feature = "parallel")]
pub(crate) fn for_each_time_chunk<F>(out: &mut [f64], f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    out.par_chunks_mut(TIME_CHUNK)
        .enumerate()
        .for_each(|(i, chunk)| f(i * TIME_CHUNK, chunk));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_time_chunk<F>(out: &mut [f64], f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    for (i, chunk) in out.chunks_mut(TIME_CHUNK).enumerate() {
        f(i * TIME_CHUNK, chunk);
    }
}

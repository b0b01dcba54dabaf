//! Deterministic data-parallel kernels.
//!
//! Every reduction here is blocked into fixed-size chunks whose partial
//! results are combined in index order, so the `parallel` and sequential
//! builds produce bit-identical floating-point results and repeated runs
//! are reproducible regardless of thread scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Inputs shorter than this stay sequential even with the `parallel` feature on.
pub const PAR_MIN_LEN: usize = 4096;

/// Fixed chunk width for blocked reductions.
const CHUNK: usize = 1024;

/// Elementwise map over `0..n`, parallel when worthwhile.
pub fn map_indexed<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if n >= PAR_MIN_LEN {
        return (0..n).into_par_iter().with_min_len(CHUNK).map(f).collect();
    }
    map_indexed_seq(n, f)
}

/// Sequential reference path for [`map_indexed`].
pub fn map_indexed_seq<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64,
{
    (0..n).map(f).collect()
}

fn chunk_sum<F>(lo: usize, hi: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64,
{
    let mut acc = 0.0;
    for i in lo..hi {
        acc += f(i);
    }
    acc
}

/// Blocked sum of `f(0) + … + f(n-1)`; identical bits on both build flavors.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    #[cfg(feature = "parallel")]
    if n >= PAR_MIN_LEN {
        let partials: Vec<f64> = (0..chunks)
            .into_par_iter()
            .map(|c| chunk_sum(c * CHUNK, ((c + 1) * CHUNK).min(n), &f))
            .collect();
        return partials.iter().sum();
    }
    (0..chunks)
        .map(|c| chunk_sum(c * CHUNK, ((c + 1) * CHUNK).min(n), &f))
        .sum()
}

/// Sequential reference path for [`sum_indexed`] (same blocking, same bits).
pub fn sum_indexed_seq<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .map(|c| chunk_sum(c * CHUNK, ((c + 1) * CHUNK).min(n), &f))
        .sum()
}

/// Maximum of `f(i)` over `0..n`; `f64::NEG_INFINITY` when `n == 0`.
pub fn max_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if n >= PAR_MIN_LEN {
        return (0..n)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(f)
            .reduce(|| f64::NEG_INFINITY, f64::max);
    }
    max_indexed_seq(n, f)
}

/// Sequential reference path for [`max_indexed`].
pub fn max_indexed_seq<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    (0..n).map(f).fold(f64::NEG_INFINITY, f64::max)
}

//! Per-particle loops. Parallel with the `parallel` feature, sequential
//! otherwise; each index only touches its own slot, so both produce the
//! same result.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the rayon split is not worth it.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 64;

#[cfg(feature = "parallel")]
pub fn for_each_indexed<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    items
        .par_iter_mut()
        .with_min_len(MIN_CHUNK)
        .enumerate()
        .for_each(|(i, v)| f(i, v));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_indexed<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    items.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
}

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .with_min_len(MIN_CHUNK)
        .map(f)
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Independent jobs such as whole chains; no minimum chunk.
#[cfg(feature = "parallel")]
pub fn map_jobs<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().with_max_len(1).map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_jobs<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

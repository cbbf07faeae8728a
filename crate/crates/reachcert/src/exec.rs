//! Data-parallel helpers with a sequential fallback.
//!
//! Every hot loop in the crate funnels through these two functions. With the
//! default `parallel` feature they fan out on rayon; without it they are plain
//! loops. Results are collected in input order, so callers that fold the
//! output deterministically get bit-identical answers at any worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map over a slice, preserving order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Map over an index range, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// True when this build fans work out on rayon.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

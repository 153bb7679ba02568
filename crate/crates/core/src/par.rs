//! Order-preserving map over independent work items.
//!
//! With the `parallel` feature (default) [`map`] fans out over the rayon pool;
//! without it, it runs in order on the calling thread. Each work item must own
//! its RNG and simulator so the result is identical either way.

/// Map `f` over `items`, preserving order. Parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    sequential_map(items, f)
}

/// Always-sequential variant of [`map`].
pub fn sequential_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

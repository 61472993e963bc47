//! Execution strategy for the data-parallel parts of the pipeline.
//!
//! Per-device gradient evaluation, Monte-Carlo replicas and sweep rows are
//! all independent map-shaped workloads. With the `parallel` feature
//! (enabled by default) they run on the rayon thread pool; without it the
//! same code runs sequentially. Results are always collected in input
//! order and every reduction downstream folds sequentially over that
//! order, so both builds produce bit-identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f` for each index in `0..n` and collects the results in
/// index order. Runs on the rayon pool when the `parallel` feature is
/// enabled, sequentially otherwise.
pub fn map_ordered<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Sequential twin of [`map_ordered`], available in every build. Exists so
/// benchmarks can measure the sequential path inside a parallel build.
pub fn map_ordered_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Name of the compiled execution mode, used by benchmark labels.
pub fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}

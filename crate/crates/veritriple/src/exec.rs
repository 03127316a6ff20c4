//! Bounded data-parallel execution over independent work items.
//!
//! Corpus augmentation, benchmark evaluation and audits all map an expensive
//! function (teacher call + compile + simulate) over independent items. With
//! the `parallel` feature (on by default) the map runs on a dedicated rayon
//! pool sized to `workers`; without it, or with `workers == 1`, items are
//! processed sequentially in input order. Results always come back in input
//! order either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items` with at most `workers` items in flight.
///
/// `workers == 1` always takes the sequential path, which processes items in
/// input order; callers rely on that for deterministic output files.
pub fn map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    #[cfg(feature = "parallel")]
    if workers > 1 {
        return pool(workers).install(|| items.par_iter().map(&f).collect());
    }
    let _ = workers;
    map_seq(items, f)
}

/// Sequential reference path for [`map`]; always available so the bench
/// suite can compare it against the parallel path.
pub fn map_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Apply `f` to every item, stopping at the first error.
///
/// With `workers > 1` outstanding items may be skipped once an error is hit;
/// callers treat any `Err` as a whole-run abort so that is acceptable.
pub fn try_for_each<T, E, F>(items: &[T], workers: usize, f: F) -> Result<(), E>
where
    T: Sync,
    E: Send,
    F: Fn(&T) -> Result<(), E> + Sync,
{
    #[cfg(feature = "parallel")]
    if workers > 1 {
        return pool(workers).install(|| items.par_iter().try_for_each(&f));
    }
    let _ = workers;
    items.iter().try_for_each(f)
}

#[cfg(feature = "parallel")]
fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .thread_name(|i| format!("veritriple-worker-{i}"))
        .build()
        .expect("building worker pool")
}

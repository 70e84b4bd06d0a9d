//! Bounded fork-join for independent per-start work.
//!
//! Environment rollouts are embarrassingly parallel; everything else in the
//! trainer is intentionally serial. This module provides an order-preserving
//! parallel map over a slice with a process-wide thread cap (set once from the
//! `DFPO_THREADS` environment variable by the CLI). Outputs are written by
//! input index, so results are identical for any thread count.

use std::sync::atomic::{AtomicUsize, Ordering};

static THREAD_CAP: AtomicUsize = AtomicUsize::new(0);

/// Cap the number of worker threads used by [`map_ordered`]. `0` means
/// "auto" (the machine's available parallelism).
pub fn set_thread_cap(n: usize) {
    THREAD_CAP.store(n, Ordering::SeqCst);
}

/// Number of threads that would be used for `jobs` independent jobs.
pub fn thread_count(jobs: usize) -> usize {
    let cap = THREAD_CAP.load(Ordering::SeqCst);
    let auto = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let limit = if cap == 0 { auto } else { cap };
    limit.max(1).min(jobs.max(1))
}

/// Apply `f` to every `(index, item)` pair, preserving input order.
///
/// The slice is split into contiguous chunks over at most [`thread_count`]
/// scoped threads. Falls back to a plain sequential map when one thread
/// suffices.
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    let n = items.len();
    let threads = thread_count(n);
    if threads <= 1 || n <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = n.div_ceil(threads);
    let mut out: Vec<Option<U>> = Vec::with_capacity(n);
    out.resize_with(n, || None);
    std::thread::scope(|scope| {
        for (ci, (in_chunk, out_chunk)) in items.chunks(chunk).zip(out.chunks_mut(chunk)).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (k, (item, slot)) in in_chunk.iter().zip(out_chunk.iter_mut()).enumerate() {
                    *slot = Some(f(ci * chunk + k, item));
                }
            });
        }
    });
    out.into_iter().map(|o| o.expect("every chunk fills its slots")).collect()
}

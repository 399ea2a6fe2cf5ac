//! Worker-count setting and an ordered scoped-thread map.

use std::cell::Cell;
use std::sync::atomic::{AtomicUsize, Ordering};

static THREADS: AtomicUsize = AtomicUsize::new(1);

thread_local! {
    static IN_WORKER: Cell<bool> = const { Cell::new(false) };
}

/// Worker count for a new parallel region; nested regions run serially.
fn region_workers(len: usize) -> usize {
    if IN_WORKER.with(|w| w.get()) {
        1
    } else {
        threads().min(len.max(1))
    }
}

fn mark_worker() {
    IN_WORKER.with(|w| w.set(true));
}

/// Sets the number of worker threads used by column-parallel loops.
pub fn set_threads(n: usize) {
    THREADS.store(n.max(1), Ordering::Relaxed);
    faer::set_global_parallelism(faer::Parallelism::None);
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

/// Maps `f` over `0..len`, splitting the range into contiguous chunks across
/// threads. The output order matches the input order for any thread count.
pub(crate) fn ordered_map<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = region_workers(len);
    if workers <= 1 {
        return (0..len).map(f).collect();
    }
    let chunk = len.div_ceil(workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = (w * chunk).min(len);
                let hi = ((w + 1) * chunk).min(len);
                s.spawn(move || {
                    mark_worker();
                    (lo..hi).map(f).collect::<Vec<T>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_map_keeps_order() {
        set_threads(3);
        let v = ordered_map(10, |i| i * i);
        set_threads(1);
        assert_eq!(v, (0..10).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn nested_regions_stay_ordered() {
        set_threads(4);
        let v = ordered_map(5, |i| ordered_map(4, move |j| 10 * i + j));
        set_threads(1);
        assert_eq!(v[3], vec![30, 31, 32, 33]);
    }
}

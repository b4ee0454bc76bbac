//! Bounded worker pool for nested parallel work.
//!
//! Every worker performs at most one backend call at a time, so a pool of
//! `max_in_flight` threads bounds outstanding generations. Calls made from
//! inside an existing pool reuse it instead of nesting a second one.

use rayon::prelude::*;

pub(crate) fn run<R: Send>(max_in_flight: usize, f: impl FnOnce() -> R + Send) -> R {
    if rayon::current_thread_index().is_some() {
        return f();
    }
    match rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(e) => {
            tracing::warn!(error = %e, "could not start worker pool; running sequentially");
            f()
        }
    }
}

/// Order-preserving parallel map over `items`.
pub(crate) fn map<T: Sync, R: Send>(max_in_flight: usize, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    run(max_in_flight, || items.par_iter().map(&f).collect())
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn preserves_order_and_bound() {
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        let items: Vec<usize> = (0..64).collect();
        let out = super::map(3, &items, |&i| {
            let now = live.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(1));
            live.fetch_sub(1, Ordering::SeqCst);
            i * 2
        });
        assert_eq!(out, items.iter().map(|i| i * 2).collect::<Vec<_>>());
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }
}

//! Scoped-thread executor for sub-question gathering and benchmark rows.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use revqa_core::engine::{Executor, GatherResult};

/// Calls `f(0..n)` on up to `workers` threads and returns results in index
/// order.
pub fn par_map<T, F>(workers: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..workers.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(i);
                *slots[i].lock().expect("slot lock") = Some(v);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every index ran"))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Threaded {
    pub workers: usize,
}

impl Threaded {
    pub fn new(workers: usize) -> Self {
        Threaded { workers }
    }
}

impl Executor for Threaded {
    fn map(&self, n: usize, f: &(dyn Fn(usize) -> GatherResult + Sync)) -> Vec<GatherResult> {
        par_map(self.workers, n, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_keep_index_order() {
        let out = par_map(4, 100, |i| {
            if i % 7 == 0 {
                thread::yield_now();
            }
            i * i
        });
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        assert!(par_map(3, 0, |i| i).is_empty());
    }
}

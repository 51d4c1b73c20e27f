//! Thread-pool plumbing shared by the stages: an order-preserving bounded
//! parallel map, a counting semaphore, and a one-shot cancellation flag.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

/// Apply `f` to every item on at most `workers` threads. Results come back
/// in input order regardless of completion order.
pub fn bounded_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

/// Counting semaphore with in-flight instrumentation.
#[derive(Debug)]
pub struct Semaphore {
    permits: usize,
    state: Mutex<usize>,
    freed: Condvar,
    peak: AtomicUsize,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: permits.max(1),
            state: Mutex::new(0),
            freed: Condvar::new(),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut in_flight = self.state.lock().expect("semaphore poisoned");
        while *in_flight >= self.permits {
            in_flight = self.freed.wait(in_flight).expect("semaphore poisoned");
        }
        *in_flight += 1;
        self.peak.fetch_max(*in_flight, Ordering::SeqCst);
        Permit { sem: self }
    }

    /// Highest number of simultaneously held permits observed so far.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

pub struct Permit<'a> {
    sem: &'a Semaphore,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut in_flight = self.sem.state.lock().expect("semaphore poisoned");
        *in_flight -= 1;
        self.sem.freed.notify_one();
    }
}

/// One-shot broadcast flag. Clones observe the same signal.
#[derive(Debug, Clone, Default)]
pub struct CancelToken {
    fired: Arc<AtomicBool>,
}

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.fired.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.fired.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn bounded_map_preserves_order() {
        let items: Vec<u64> = (0..50).collect();
        let out = bounded_map(&items, 4, |_, x| {
            std::thread::sleep(Duration::from_micros(50 * (x % 3)));
            x * 2
        });
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn semaphore_bounds_parallelism() {
        let sem = Semaphore::new(3);
        let items: Vec<u32> = (0..24).collect();
        bounded_map(&items, 8, |_, _| {
            let _p = sem.acquire();
            std::thread::sleep(Duration::from_millis(2));
        });
        assert!(sem.peak() <= 3);
        assert!(sem.peak() >= 1);
    }

    #[test]
    fn cancel_is_shared() {
        let a = CancelToken::new();
        let b = a.clone();
        assert!(!b.is_cancelled());
        a.cancel();
        assert!(b.is_cancelled());
    }
}

//! Blocking counting semaphore with observable queue depth.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};

#[derive(Debug)]
pub struct Gate {
    capacity: usize,
    active: Mutex<usize>,
    freed: Condvar,
    waiting: AtomicUsize,
    completed: AtomicUsize,
}

pub struct Permit<'a>(&'a Gate);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().unwrap() -= 1;
        self.0.completed.fetch_add(1, Ordering::Relaxed);
        self.0.freed.notify_one();
    }
}

impl Gate {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "gate capacity must be positive");
        Gate {
            capacity,
            active: Mutex::new(0),
            freed: Condvar::new(),
            waiting: AtomicUsize::new(0),
            completed: AtomicUsize::new(0),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        self.waiting.fetch_add(1, Ordering::Relaxed);
        let mut active = self.active.lock().unwrap();
        while *active >= self.capacity {
            active = self.freed.wait(active).unwrap();
        }
        *active += 1;
        self.waiting.fetch_sub(1, Ordering::Relaxed);
        Permit(self)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn active(&self) -> usize {
        *self.active.lock().unwrap()
    }

    pub fn waiting(&self) -> usize {
        self.waiting.load(Ordering::Relaxed)
    }

    pub fn completed(&self) -> usize {
        self.completed.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;
    use std::thread;
    use std::time::Duration;

    #[test]
    fn never_exceeds_capacity() {
        let gate = Gate::new(3);
        let peak = AtomicUsize::new(0);
        thread::scope(|s| {
            for _ in 0..16 {
                s.spawn(|| {
                    let _p = gate.acquire();
                    peak.fetch_max(gate.active(), Ordering::SeqCst);
                    thread::sleep(Duration::from_millis(5));
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
        assert_eq!(gate.completed(), 16);
        assert_eq!(gate.active(), 0);
    }
}

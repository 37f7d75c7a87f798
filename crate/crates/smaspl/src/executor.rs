//! Scoped-thread implementation of the core `Executor`.

use std::num::NonZeroUsize;
use std::thread;

use smaspl_core::exec::{Executor, Sequential};

pub const THREADS_VAR: &str = "SMASPL_THREADS";

/// Splits `0..n` into contiguous chunks, one per worker, and joins the
/// results back in index order.
#[derive(Debug, Clone, Copy)]
pub struct ThreadExecutor {
    threads: NonZeroUsize,
}

impl ThreadExecutor {
    pub fn new(threads: NonZeroUsize) -> Self {
        Self { threads }
    }

    pub fn threads(&self) -> usize {
        self.threads.get()
    }
}

impl Executor for ThreadExecutor {
    fn map<R: Send, F: Fn(usize) -> R + Sync>(&self, n: usize, f: F) -> Vec<R> {
        let workers = self.threads.get().min(n);
        if workers <= 1 {
            return (0..n).map(f).collect();
        }
        let chunk = n.div_ceil(workers);
        let f = &f;
        thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .step_by(chunk)
                .map(|start| s.spawn(move || (start..(start + chunk).min(n)).map(f).collect::<Vec<R>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        })
    }
}

/// Sequential or threaded, chosen at run time.
#[derive(Debug, Clone, Copy)]
pub enum Workers {
    Sequential,
    Threads(ThreadExecutor),
}

impl Workers {
    /// `0` means sequential.
    pub fn with_threads(threads: usize) -> Self {
        match NonZeroUsize::new(threads) {
            None => Workers::Sequential,
            Some(t) => Workers::Threads(ThreadExecutor::new(t)),
        }
    }

    /// Reads `SMASPL_THREADS`; unset means one worker per available core.
    pub fn from_env() -> Result<Self, String> {
        match std::env::var(THREADS_VAR) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .map(Self::with_threads)
                .map_err(|_| format!("{THREADS_VAR} must be a non-negative integer, got {v:?}")),
            Err(_) => Ok(Self::with_threads(thread::available_parallelism().map_or(1, NonZeroUsize::get))),
        }
    }

    pub fn threads(&self) -> usize {
        match self {
            Workers::Sequential => 0,
            Workers::Threads(t) => t.threads(),
        }
    }
}

impl Executor for Workers {
    fn map<R: Send, F: Fn(usize) -> R + Sync>(&self, n: usize, f: F) -> Vec<R> {
        match self {
            Workers::Sequential => Sequential.map(n, f),
            Workers::Threads(t) => t.map(n, f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_come_back_in_index_order() {
        let ex = ThreadExecutor::new(NonZeroUsize::new(3).unwrap());
        assert_eq!(ex.map(10, |i| i * i), (0..10).map(|i| i * i).collect::<Vec<_>>());
        assert!(ex.map(0, |i| i).is_empty());
    }

    #[test]
    fn zero_threads_is_sequential() {
        assert!(matches!(Workers::with_threads(0), Workers::Sequential));
        assert_eq!(Workers::with_threads(4).threads(), 4);
    }
}

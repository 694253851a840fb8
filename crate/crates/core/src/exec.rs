//! Fan-out hook for embarrassingly parallel work.
//!
//! The core crate never spawns threads. Batch evaluation, ensemble training
//! and oracle calls go through an [`Executor`]; results always come back in
//! index order so reductions stay bitwise reproducible whatever the thread
//! count.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluate `f(0), f(1), ..., f(n - 1)` and return the results in order.
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

//! Worker-pool plumbing shared by every data-parallel loop in the crate.
//!
//! With the `parallel` feature off, or with one worker, everything runs on
//! the calling thread. Reductions passed here are commutative, so results
//! never depend on the worker count.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

#[cfg(feature = "parallel")]
use std::collections::HashMap;
#[cfg(feature = "parallel")]
use std::sync::{Arc, Mutex, OnceLock};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    pub workers: usize,
    /// Maximum number of variable assignments visited before aborting.
    pub budget: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: default_workers(),
            budget: DEFAULT_BUDGET,
        }
    }
}

impl EngineConfig {
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[cfg(feature = "parallel")]
fn pool(workers: usize) -> Arc<rayon::ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let pools = POOLS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut pools = pools.lock().unwrap_or_else(|e| e.into_inner());
    pools
        .entry(workers)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .expect("thread pool"),
            )
        })
        .clone()
}

/// Maps `f` over `0..n` and folds the results with `combine`.
pub fn map_reduce<T, F, I, C>(workers: usize, n: usize, f: F, identity: I, combine: C) -> T
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
    I: Fn() -> T + Sync + Send,
    C: Fn(T, T) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 && n > 1 {
        return pool(workers).install(|| (0..n).into_par_iter().map(&f).reduce(&identity, &combine));
    }
    let _ = workers;
    (0..n).map(f).fold(identity(), combine)
}

/// First index in `0..n` (in index order) for which `f` returns `Some`.
pub fn find_first<T, F>(workers: usize, n: usize, f: F) -> Option<T>
where
    T: Send,
    F: Fn(usize) -> Option<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 && n > 1 {
        return pool(workers).install(|| (0..n).into_par_iter().find_map_first(&f));
    }
    let _ = workers;
    (0..n).find_map(f)
}

/// Shared visit counter; each worker batches its increments locally.
#[derive(Debug)]
pub struct Budget {
    used: AtomicU64,
    limit: u64,
    tripped: AtomicBool,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget {
            used: AtomicU64::new(0),
            limit,
            tripped: AtomicBool::new(false),
        }
    }

    pub fn meter(&self) -> Meter<'_> {
        Meter {
            budget: self,
            local: 0,
            tripped: self.tripped.load(Ordering::Relaxed),
        }
    }

    pub fn exhausted(&self) -> bool {
        self.tripped.load(Ordering::Relaxed)
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }
}

const FLUSH_EVERY: u64 = 4096;

pub struct Meter<'a> {
    budget: &'a Budget,
    local: u64,
    tripped: bool,
}

impl Meter<'_> {
    /// Records one visit; false once the budget is spent.
    #[inline]
    pub fn tick(&mut self) -> bool {
        self.local += 1;
        if self.local >= FLUSH_EVERY {
            self.flush();
        }
        !self.tripped
    }

    #[inline]
    pub fn tripped(&self) -> bool {
        self.tripped
    }

    pub fn flush(&mut self) {
        let total = self.budget.used.fetch_add(self.local, Ordering::Relaxed) + self.local;
        self.local = 0;
        if total > self.budget.limit || self.budget.tripped.load(Ordering::Relaxed) {
            self.tripped = true;
            self.budget.tripped.store(true, Ordering::Relaxed);
        }
    }
}

impl Drop for Meter<'_> {
    fn drop(&mut self) {
        if self.local > 0 {
            self.flush();
        }
    }
}

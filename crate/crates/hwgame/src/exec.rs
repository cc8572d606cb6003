//! Thread pool behind the core [`Executor`] trait.
//!
//! Jobs are indexed and collected in index order, so results never depend on
//! the number of workers.

use hwgame_core::montecarlo::Executor;
use rayon::prelude::*;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "HWGAME_WORKERS";

pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    /// `workers = 0` lets rayon choose.
    pub fn new(workers: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
        Self { pool }
    }

    /// Pool sized by [`WORKERS_ENV`]; unset or unparsable means automatic.
    pub fn from_env() -> Self {
        let workers = std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0);
        Self::new(workers)
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T, F>(&self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..count).into_par_iter().map(job).collect())
    }
}

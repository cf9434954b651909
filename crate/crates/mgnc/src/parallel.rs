use mgnc_core::experiment::{Executor, Sequential};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs trials on the calling thread or on a dedicated thread pool.
/// Results come back in job order either way.
#[derive(Debug)]
pub enum Runner {
    Sequential,
    Pool(rayon::ThreadPool),
}

impl Runner {
    pub fn new(threads: usize) -> Result<Self> {
        if threads <= 1 {
            return Ok(Runner::Sequential);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map(Runner::Pool)
            .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))
    }
}

impl Executor for Runner {
    fn map<T, R, G>(&self, jobs: &[T], f: G) -> Vec<R>
    where
        T: Sync,
        R: Send,
        G: Fn(&T) -> R + Sync,
    {
        match self {
            Runner::Sequential => Sequential.map(jobs, f),
            Runner::Pool(pool) => pool.install(|| jobs.par_iter().map(&f).collect()),
        }
    }
}

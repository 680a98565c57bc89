use dimlab_core::Executor;
use rayon::prelude::*;

/// Runs chunks on a rayon pool. Results come back in chunk order, so the
/// thread count never changes a reduction.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    /// `threads = 0` uses every available core.
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Pool { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map_chunks<A, F>(&self, chunks: usize, f: F) -> Vec<A>
    where
        A: Send,
        F: Fn(usize) -> A + Sync + Send,
    {
        self.pool.install(|| (0..chunks).into_par_iter().map(f).collect())
    }
}
